import sys

from cl_uap.cli.main import main

sys.exit(main())
