from typing import Annotated, Iterator

from dishka import FromComponent, provide, Provider, Scope
from sqlalchemy import Engine, create_engine, event
from sqlalchemy.orm import Session, sessionmaker

from core.database.config import Base
from core.environment.config import Settings


def build_engine(url: str) -> Engine:
    """Create the manifest-store engine and make sure the schema exists"""
    # importing the models registers their tables on Base.metadata
    import pipeline.models  # noqa: F401

    engine = create_engine(url, future=True)

    if url.startswith("sqlite"):
        @event.listens_for(engine, "connect")
        def _enable_foreign_keys(dbapi_connection, _):
            cursor = dbapi_connection.cursor()
            cursor.execute("PRAGMA foreign_keys=ON")
            cursor.close()

    Base.metadata.create_all(engine)
    return engine


class DatabaseConnectionProvider(Provider):
    """Provider for the run-manifest database"""
    component = "database"
    scope = Scope.APP

    @provide
    def get_database_engine(
        self,
        conf: Annotated[Settings, FromComponent("environment")]
    ) -> Engine:
        """Provides the manifest database engine"""
        return build_engine(conf.get_manifest_db_url())

    @provide
    def get_session_maker(
        self,
        engine: Engine,
    ) -> sessionmaker[Session]:
        """Provides session maker for the manifest database"""
        return sessionmaker(bind=engine, expire_on_commit=False)


class DatabaseSessionProvider(Provider):
    """Provider for manifest database sessions"""
    component = "database"
    scope = Scope.REQUEST

    @provide
    def get_session(
        self,
        session_maker: Annotated[
            sessionmaker[Session],
            FromComponent("database"),
        ],
    ) -> Iterator[Session]:
        """Provides a session that commits when the command finishes"""
        with session_maker() as session:
            try:
                yield session
                session.commit()
            except Exception as e:
                session.rollback()
                raise e
