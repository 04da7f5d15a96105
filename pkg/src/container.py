from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from dependency_injector import containers, providers

from .config import settings
from .services.pipeline import Pipeline
from .services.repositories import CorpusRepository


class Container(containers.DeclarativeContainer):
    wiring_config = containers.WiringConfiguration()

    # Configuration
    config = providers.Configuration()

    # Repositories
    corpus_repository = providers.Singleton(CorpusRepository)

    # Shared thread pool for independent realizations
    executor = providers.Singleton(ThreadPoolExecutor, max_workers=config.threads)

    # Services
    pipeline = providers.Singleton(Pipeline, repo=corpus_repository, executor=executor)


# Global, configured container instance
container = Container()
container.config.from_dict(settings.model_dump())
