"""Event-type ontology toolkit.

Builds, disambiguates, refines, and prunes an event-type ontology from
knowledge-base triples, and trains and evaluates ontology-driven multi-label
event classifiers on top of it.
"""

__version__ = "0.1.0"
