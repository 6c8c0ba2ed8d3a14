import sys

from fbmhedge.cli import main

sys.exit(main())
