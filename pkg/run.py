"""
Command Line Entry Point
Usage: python run.py gen-data|train|eval|check [options]
"""
import sys

from orbitsym.cli import main

if __name__ == '__main__':
    sys.exit(main())
