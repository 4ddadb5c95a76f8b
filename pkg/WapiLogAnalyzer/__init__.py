"""
WapiLogAnalyzer - przetwarzanie logów użycia WAPI

Moduły:
- log_model: wpisy logu, znaczniki czasu, opis formatu
- parser: ekstrakcja pól z linii logu
- preprocess: fuzja, czyszczenie, naprawa czasu, generalizacja
- sessionizer: heurystyki rekonstrukcji sesji
- quality: detektory problemów jakości logu
- stats: statystyki i porównanie heurystyk
- synth: generator logów z danymi referencyjnymi
"""

__version__ = "1.0.0"
