import sys

from phunmix.main import main

sys.exit(main())
