import sys

from homotrack.cli import main

sys.exit(main())
