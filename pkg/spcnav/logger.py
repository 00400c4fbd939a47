import logging

# Configure the basic logger
logger = logging.getLogger("spcnav")
logger.setLevel(logging.DEBUG)
_handler = logging.StreamHandler()
_handler.setLevel(logging.WARNING)
logger.addHandler(_handler)
_formatter = logging.Formatter("%(asctime)s %(levelname)s %(message)s")
_handler.setFormatter(_formatter)


def attach_file_logger(filename):
    """Additionally write the log of this session to the given file"""
    handler = logging.FileHandler(filename, mode="w")
    handler.setFormatter(_formatter)
    handler.setLevel(logging.INFO)
    logger.addHandler(handler)
    return handler


def detach_file_logger(handler):
    """Remove a handler previously created by :func:`attach_file_logger`"""
    logger.removeHandler(handler)
    handler.close()
