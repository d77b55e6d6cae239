import sys

from bpve.cli import main

# Run from a source checkout without installing the package
if __name__ == "__main__":
    sys.exit(main())
