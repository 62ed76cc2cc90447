#pragma once

#include "demreg/error.hpp"

#include <gtest/gtest.h>

#include <string>

// Asserts that `stmt` throws demreg::Error carrying `expected_code`.
#define EXPECT_DEMREG_ERROR(stmt, expected_code)                                             \
    do {                                                                                     \
        bool thrown_ = false;                                                                \
        try {                                                                                \
            stmt;                                                                            \
        } catch (const demreg::Error& e_) {                                                  \
            thrown_ = true;                                                                  \
            EXPECT_EQ(e_.code(), std::string(expected_code)) << e_.what();                   \
        }                                                                                    \
        EXPECT_TRUE(thrown_) << "expected " << (expected_code) << " from " #stmt;            \
    } while (0)
