import sys

from featgraft.cli import main

sys.exit(main())
