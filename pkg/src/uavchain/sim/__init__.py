"""Network model: entities, mobility, radio channel, routing and ledger."""
