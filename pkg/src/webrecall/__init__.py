"""webrecall: web agents that learn from their own navigation history.

The package keeps a graph of every page an agent has seen (the replay
buffer), searches it for routes to pages relevant to a task (navigator),
diagnoses failed episodes with an oracle (reflector), and stores repaired
trajectories as retrievable demonstrations (reflective memory).
"""

__version__ = "0.1.0"
