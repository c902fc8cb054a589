import sys

from fleetreg.cli import main

sys.exit(main())
