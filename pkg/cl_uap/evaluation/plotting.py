"""Lazy matplotlib access on the non-interactive Agg backend."""


def pyplot():
    """
    Return ``matplotlib.pyplot`` with the Agg backend selected.

    Raises:
        ImportError: matplotlib is not installed.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt
