"""Tracked-ureteroscope navigation stack.

Subpackages:
  igtl       -- OpenIGTLink v1 message codec and stream framing
  rigid      -- fiducial-based rigid registration (tracker -> CT)
  geometry   -- meshes, convex hulls, trajectories, outlier analytics
  volume     -- CT volumes (NRRD subset), slicing, window/level
  simulator  -- tracker stand-in: replay / synthetic path streaming
  server     -- live navigation session server
  cli        -- command-line entry points
"""

__version__ = "0.1.0"
