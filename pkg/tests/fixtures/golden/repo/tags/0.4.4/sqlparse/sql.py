"""Core token model: parsing produces a token tree, flatten walks it."""


class Token:
    def __init__(self, value):
        self.value = value

    def flatten(self):
        yield self


class TokenList(Token):
    def __init__(self, tokens=None):
        super().__init__(None)
        self.tokens = tokens if tokens is not None else []

    def flatten(self):
        for token in self.tokens:
            yield from token.flatten()


def _group_brackets(text):
    root = TokenList()
    stack = [root]
    for ch in text:
        if ch == "[":
            inner = TokenList()
            stack[-1].tokens.append(inner)
            stack.append(inner)
        elif ch == "]" and len(stack) > 1:
            stack.pop()
        else:
            stack[-1].tokens.append(Token(ch))
    return root


def parse(sql):
    """Parse a statement and return its flattened token stream."""
    statement = _group_brackets(str(sql))
    return tuple(statement.flatten())
