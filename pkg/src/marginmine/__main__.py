import sys

from marginmine.cli import main

sys.exit(main())
