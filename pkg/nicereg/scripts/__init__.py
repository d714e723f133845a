# This is a package of nicereg scripts.
