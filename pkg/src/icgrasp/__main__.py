"""Allow running the package with python -m icgrasp."""

from icgrasp.main import main

if __name__ == "__main__":
    main()
