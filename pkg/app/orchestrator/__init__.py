# Orchestrator components