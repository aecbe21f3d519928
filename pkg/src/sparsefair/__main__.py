import sys

from sparsefair.cli import main

sys.exit(main())
