import sys

from kinklap.cli import main

sys.exit(main())
