"""Named scenario files shipped with the package."""
