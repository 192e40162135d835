import pytest

from simloop.defaults import default_knowledge_base, default_schemes, default_tasks


@pytest.fixture(scope="session")
def kb():
    return default_knowledge_base()


@pytest.fixture(scope="session")
def tasks(kb):
    return default_tasks(kb)


@pytest.fixture(scope="session")
def task_by_id(tasks):
    return {task.id: task for task in tasks}


@pytest.fixture(scope="session")
def schemes():
    return default_schemes()


@pytest.fixture(scope="session")
def scheme_by_name(schemes):
    return {scheme.name: scheme for scheme in schemes}
