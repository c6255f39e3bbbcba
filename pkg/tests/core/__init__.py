"""Core module test package."""
