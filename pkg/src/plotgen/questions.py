"""The preference questions asked about each plot pair.

Q1 and Q3-Q6 are the five choice questions (answered Plot A / Plot B /
Both / Neither); Q2 is the free-text explanation of Q1 with a minimum
word count, used as a label-quality gate.  The judge's aspect sentences
embed the same question texts.
"""

from __future__ import annotations

CHOICE_QUESTION_IDS = ("Q1", "Q3", "Q4", "Q5", "Q6")

QUESTION_TEXTS = {
    "Q1": "Which story plot is more interesting to you overall?",
    "Q3": (
        "In your opinion, which one of the plots above could generate a more "
        "interesting book or movie (when a full story is written based on it)?"
    ),
    "Q4": "Which story plot created more suspense and surprise?",
    "Q5": "Which story’s characters or events do you identify with or care for more?",
    "Q6": "Which story has a better ending?",
}

Q2_PROMPT = (
    "Please explain your answer to Q1. Your explanation must be at least 25 words."
)

MIN_EXPLANATION_WORDS = 25
