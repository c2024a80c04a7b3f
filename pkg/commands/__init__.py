# Marks the commands directory as a Python package.
