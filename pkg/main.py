"""
GDP relational inference toolkit - Main Entry Point
Command-line access to data generation, training, experiments and evaluation.
"""

import os
import sys

# Add the current directory to the Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from cli import main as run_cli


def main():
    """Application entry point."""
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
