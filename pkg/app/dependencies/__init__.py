# This file makes 'dependencies' a Python package
