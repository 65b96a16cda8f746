import sys

from invdens.cli import main

sys.exit(main())
