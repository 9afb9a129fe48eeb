from .board import Board, BoardFormatError, PASSABLE, TILE_CHARS, TileType, read_boards, write_boards
from .engine import (
    Action,
    Attacker,
    ENTITY_ORDER,
    GameConfig,
    GameState,
    IllegalActionError,
    InvalidBoardError,
    TurnEvents,
    distance_field,
    legal_actions,
    new_game,
    score,
    step,
)

__all__ = [
    "Action", "Attacker", "Board", "BoardFormatError", "ENTITY_ORDER",
    "GameConfig", "GameState", "IllegalActionError", "InvalidBoardError",
    "PASSABLE", "TILE_CHARS", "TileType", "TurnEvents", "distance_field",
    "legal_actions", "new_game", "read_boards", "score", "step", "write_boards",
]
