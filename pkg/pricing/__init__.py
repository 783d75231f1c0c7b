"""Package marker for the pricing module.

Closed-form pricing: the Bachelier formula, the volatility models and the
moment series, e.g. 'from pricing import bachelier'.
"""
