"""Industrial intrusion detection toolkit.

Simulates labeled Modbus/TCP SCADA traffic and batch-process data with
injected attacks, detects anomalies via z-normalized matrix profiles and
from-scratch packet classifiers, and fuses alerts from all sources into
incidents with a static operator report.
"""

__version__ = "0.1.0"
