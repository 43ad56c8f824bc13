"""Allow `python -m provekit ...` to behave like the installed script."""

from provekit.cli import entry

entry()
