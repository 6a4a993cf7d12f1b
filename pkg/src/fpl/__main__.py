import sys

from fpl.cli import main

sys.exit(main())
