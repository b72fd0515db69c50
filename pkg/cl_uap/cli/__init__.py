"""
Command-line interface: RunConfig parsing, command handlers and the entry point.

Import ``cl_uap.cli.main`` for ``main``/``run``; this package module stays
import-free so that ``cl_uap.manager`` can use the config models.
"""
