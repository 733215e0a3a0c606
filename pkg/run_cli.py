#!/usr/bin/env python3
"""
Launcher for the carpetq command line.
Puts the project root on sys.path so it runs from a plain checkout.
"""
import sys
from pathlib import Path

# Project root and package
_project_root = Path(__file__).resolve().parent
_package_name = "carpetq"

if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

if __name__ == "__main__":
    from importlib import import_module

    cli = import_module(f"{_package_name}.cli.main")
    raise SystemExit(cli.main())
