import sys

from pfclus.cli import main

sys.exit(main())
