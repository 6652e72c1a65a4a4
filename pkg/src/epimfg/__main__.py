import sys

from epimfg.cli import main

sys.exit(main())
