"""Allow ``python -m camharness``."""

import sys

from .cli import main

sys.exit(main())
