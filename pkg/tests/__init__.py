"""Unit tests for the cl_uap toolkit."""
