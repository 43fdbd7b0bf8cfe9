"""
Main CLI entry point.
"""
#!/usr/bin/env python3

import sys

from app.cli.commands import cli


def main():
    """Main entry point for the application"""
    return cli()


if __name__ == "__main__":
    sys.exit(main())
