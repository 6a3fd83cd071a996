"""Score a handful of answered questions and print the accuracy table."""

from __future__ import annotations

from trafficsg import QARecord, evaluate

qa = [
    QARecord("a1", "Counting", "H0", "How many cars are visible at frame 30?", "2"),
    QARecord("a2", "Counting", "H1", "How many vehicles pass the truck?", "2"),
    QARecord("a3", "Class", "H0", "What kind of object is track 3?", "B",
             {"A": "car", "B": "truck", "C": "bus"}),
    QARecord("a4", "Motion", "H1", "Is the truck moving?", "no"),
    QARecord("a5", "Positioning", "H0", "Which car leads at frame 30?", "1"),
    QARecord("a6", "Existence", "H1", "Is there a pedestrian at frame 10?", "no"),
]
predictions = {"a1": "2", "a2": "3", "a3": "truck", "a4": " No. ", "a5": "1", "a6": "unknown"}

table, records = evaluate(qa, predictions)
print(table.render())
print()
for r in records:
    print(f"{r.question_id}: {'right' if r.correct else 'wrong'}")
