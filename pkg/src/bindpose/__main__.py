import sys

from bindpose.cli import main

sys.exit(main())
