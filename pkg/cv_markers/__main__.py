import sys

from cv_markers.app import main

sys.exit(main())
