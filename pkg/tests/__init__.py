"""
Test suite for harvestrisk
"""
