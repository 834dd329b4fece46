import sys

from discrete_fdp.cli import main

sys.exit(main())
