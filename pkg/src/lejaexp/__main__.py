import sys

from lejaexp.cli import main

sys.exit(main())
