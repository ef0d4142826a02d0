"""Visual bug detection harness for HTML5 canvas application screenshots.

Prompts a vision-language model with configurable context strategies,
archives the two-stage responses, routes positive predictions through
human adjudication, and reports accuracy, precision, recall, and pass@k.
"""

__version__ = "0.1.0"
