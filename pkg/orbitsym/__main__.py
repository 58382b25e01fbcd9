import sys

from orbitsym.cli import main

sys.exit(main())
