from .exceptions import ConfigurateException


class ConfigNumerics:
    def __init__(self,
                 simplex_atol: float = 1e-9,
                 inertia_rtol: float = 1e-12,
                 max_blob_retries: int = 1000,
                 eval_subsample: int = 5000,
                 diagnostics_every: int = 5,
                 embed_batch_size: int = 1024):
        """
        Global numeric settings.
        You can change the configuration at any time.

        :param simplex_atol: Tolerance for soft-assignment rows summing to one.
        :param inertia_rtol: Relative slack allowed when asserting that k-means inertia
                             never increases between Lloyd iterations.
        :param max_blob_retries: Rejection-sampling budget per blob center in make_blobs.
        :param eval_subsample: Size of the seeded evaluation subsample used by the
                               quadratic diagnostics (intra/inter-CD, silhouette, rho).
        :param diagnostics_every: Default cadence (in epochs) of the quadratic diagnostics.
        :param embed_batch_size: Batch size used when embedding whole datasets.
        """
        self._simplex_atol = simplex_atol
        self._inertia_rtol = inertia_rtol
        self._max_blob_retries = max_blob_retries
        self._eval_subsample = eval_subsample
        self._diagnostics_every = diagnostics_every
        self._embed_batch_size = embed_batch_size

    @property
    def simplex_atol(self) -> float:
        return self._simplex_atol

    @simplex_atol.setter
    def simplex_atol(self, value: float):
        self._simplex_atol = self._positive_float('simplex_atol', value)

    @property
    def inertia_rtol(self) -> float:
        return self._inertia_rtol

    @inertia_rtol.setter
    def inertia_rtol(self, value: float):
        if not isinstance(value, int | float) or value < 0:
            raise ConfigurateException(detail={'inertia_rtol': 'must be a float >= 0'})
        self._inertia_rtol = float(value)

    @property
    def max_blob_retries(self) -> int:
        return self._max_blob_retries

    @max_blob_retries.setter
    def max_blob_retries(self, value: int):
        self._max_blob_retries = self._positive_int('max_blob_retries', value)

    @property
    def eval_subsample(self) -> int:
        """Size of the evaluation subsample for quadratic diagnostics."""
        return self._eval_subsample

    @eval_subsample.setter
    def eval_subsample(self, value: int):
        self._eval_subsample = self._positive_int('eval_subsample', value)

    @property
    def diagnostics_every(self) -> int:
        return self._diagnostics_every

    @diagnostics_every.setter
    def diagnostics_every(self, value: int):
        self._diagnostics_every = self._positive_int('diagnostics_every', value)

    @property
    def embed_batch_size(self) -> int:
        return self._embed_batch_size

    @embed_batch_size.setter
    def embed_batch_size(self, value: int):
        self._embed_batch_size = self._positive_int('embed_batch_size', value)

    @staticmethod
    def _positive_int(name: str, value) -> int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigurateException(detail={name: 'must be an int'})
        if value < 1:
            raise ConfigurateException(detail={name: 'must be > 0'})
        return value

    @staticmethod
    def _positive_float(name: str, value) -> float:
        if not isinstance(value, int | float) or isinstance(value, bool):
            raise ConfigurateException(detail={name: 'must be a float'})
        if value <= 0:
            raise ConfigurateException(detail={name: 'must be > 0'})
        return float(value)

    def configure(self, **kwargs):
        """
        Configurate numeric settings.
        :param kwargs:
        """
        for key, value in kwargs.items():
            if not hasattr(type(self), key):
                raise ConfigurateException(detail={key: 'unknown setting'})
            setattr(self, key, value)


config_numerics = ConfigNumerics()
