"""
SVI Lab - Main entry point
"""

if __name__ == "__main__":
    import sys

    from src.main import main
    sys.exit(main())
