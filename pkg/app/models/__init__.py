# This file makes 'models' a Python package