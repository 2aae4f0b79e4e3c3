# Test suite for STEADY
