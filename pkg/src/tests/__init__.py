"""
# src/tests
"""
