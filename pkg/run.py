#!/usr/bin/env python
"""
Command-line runner for MetaSDF Shape Lab
"""
import sys

from metasdf.main import main

if __name__ == "__main__":
    sys.exit(main())
