import sys

from conslaw.cli import main

sys.exit(main())
