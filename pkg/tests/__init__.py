"""
W2Checks - Test Suite

Run tests with:
    pytest tests/
"""
