import sys

from pivotpend.cli import main

sys.exit(main())
