import logging
from typing import Any, Dict, Optional, Tuple

import aiohttp
from aiohttp import ClientTimeout
from tenacity import AsyncRetrying, retry_if_exception_type, stop_after_attempt, wait_exponential

logger = logging.getLogger(__name__)


class AsyncHttpClient:
    """Asynchronous JSON client used to reach vendor device endpoints."""

    def __init__(
        self,
        base_url: str = "",
        headers: Optional[Dict[str, str]] = None,
        timeout: int = 10,
        max_retries: int = 3,
        retry_wait_s: float = 0.5,
    ):
        """
        Initialize HTTP client

        Args:
            base_url: Base URL prepended to relative paths
            headers: Request headers
            timeout: Request timeout in seconds
            max_retries: Attempts per request, including the first one
            retry_wait_s: Minimum wait between attempts
        """
        self.base_url = base_url.rstrip("/")
        self.headers = headers or {}
        self.timeout = ClientTimeout(total=timeout)
        self.max_retries = max(1, max_retries)
        self.retry_wait_s = retry_wait_s
        self._session: Optional[aiohttp.ClientSession] = None

    async def __aenter__(self):
        await self.init_session()
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb):
        await self.close()

    async def init_session(self):
        if self._session is None:
            self._session = aiohttp.ClientSession(headers=self.headers, timeout=self.timeout)

    async def close(self):
        if self._session:
            await self._session.close()
            self._session = None

    def _get_full_url(self, path: str) -> str:
        if path.startswith(('http://', 'https://')):
            return path
        return f"{self.base_url}/{path.lstrip('/')}"

    async def request(
        self,
        method: str,
        path: str,
        json_data: Optional[Any] = None,
        headers: Optional[Dict[str, str]] = None,
    ) -> Tuple[int, Any]:
        """
        Send one request, retrying on connection errors.

        Returns:
            (status code, decoded JSON body or text); non-2xx statuses are
            returned, not raised, since 503 is an in-protocol answer
        """
        await self.init_session()
        merged_headers = {**self.headers, **(headers or {})}
        url = self._get_full_url(path)

        retrying = AsyncRetrying(
            stop=stop_after_attempt(self.max_retries),
            wait=wait_exponential(multiplier=self.retry_wait_s, min=self.retry_wait_s, max=10),
            retry=retry_if_exception_type(aiohttp.ClientConnectionError),
            reraise=True,
        )
        async for attempt in retrying:
            with attempt:
                logger.debug(f"Sending HTTP request: {method} {url} json={json_data}")
                try:
                    async with self._session.request(method=method, url=url, json=json_data,
                                                     headers=merged_headers) as response:
                        return response.status, await self._read_body(response)
                except aiohttp.ClientError as e:
                    logger.warning(f"HTTP request {method} {url} failed: {e}")
                    raise

    @staticmethod
    async def _read_body(response: aiohttp.ClientResponse) -> Any:
        content_type = response.headers.get('Content-Type', '')
        if 'application/json' in content_type:
            return await response.json()
        return await response.text()
