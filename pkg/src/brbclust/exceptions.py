from typing import Any


class BaseExceptionBRB(Exception):
    def __init__(self, message: str,
                 exit_code: int = 2,
                 detail: dict[str, Any] = None):
        super().__init__(message)
        self.message = message
        self.exit_code = exit_code
        self.detail = detail

    def __str__(self):
        return ((f'{self.message}, '
                 f'code: {self.exit_code}, '
                 f'detail: {self.detail}')
                if self.detail
                else (f'{self.message}, '
                      f'code: {self.exit_code}'))


class ConfigurateException(BaseExceptionBRB):
    def __init__(self, message: str = 'Configurate Error',
                 exit_code: int = 2,
                 detail: dict[str, Any] = None):
        super().__init__(message, exit_code, detail)


class ShapeException(BaseExceptionBRB):
    def __init__(self, message: str = 'Shape mismatch',
                 exit_code: int = 2,
                 detail: dict[str, Any] = None):
        super().__init__(message, exit_code, detail)


class InputException(BaseExceptionBRB):
    def __init__(self, message: str = 'Invalid input',
                 exit_code: int = 2,
                 detail: dict[str, Any] = None):
        super().__init__(message, exit_code, detail)


class ContractViolation(BaseExceptionBRB):
    def __init__(self, message: str = 'Contract violation',
                 exit_code: int = 2,
                 detail: dict[str, Any] = None):
        super().__init__(message, exit_code, detail)


class NumericalFailure(BaseExceptionBRB):
    def __init__(self, message: str = 'Numerical failure',
                 exit_code: int = 3,
                 detail: dict[str, Any] = None):
        super().__init__(message, exit_code, detail)


class DataIOException(BaseExceptionBRB):
    def __init__(self, message: str = 'I/O Error',
                 exit_code: int = 4,
                 detail: dict[str, Any] = None):
        super().__init__(message, exit_code, detail)
