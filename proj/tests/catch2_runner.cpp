// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Builds the amalgamated Catch2 implementation (and its default main) once.

#include <catch2/catch_amalgamated.cpp>
