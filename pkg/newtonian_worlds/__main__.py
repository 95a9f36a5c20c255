import sys

from newtonian_worlds.cli import main

sys.exit(main())
