# main.py - run the pylayersep command line from a source checkout

import sys

from pylayersep.cli import main

if __name__ == '__main__':
    sys.exit(main())
