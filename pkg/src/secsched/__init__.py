"""Design-time toolkit for schedulable secure control transactions.

Completes sets of sensing -> message -> control chains carrying intermittent
cumulative authentication overhead: synthesizes offsets, deadlines, and
initial authentication offsets so that the system is EDF-schedulable on the
ECUs (preemptive) and the shared bus (non-preemptive), validates solutions
with an independent simulator, and evaluates opportunistic runtime
authentication against QoC degradation curves.
"""

__version__ = "0.1.0"
