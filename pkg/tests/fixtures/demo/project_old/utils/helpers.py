def greet(name):
    """
    Returns a greeting message for the provided name.

    Args:
        name: The name of the person to greet.

    Returns:
        A greeting string.
    """
    return f"Hello, {name}! Welcome to the project."
