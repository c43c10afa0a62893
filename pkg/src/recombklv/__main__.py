import sys

from recombklv.cli import main

sys.exit(main())
