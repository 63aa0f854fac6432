import pytest

from qbta import data_dir, load_demand, load_network

S = 1 / 3600.0  # one second in hours


@pytest.fixture(scope="session")
def two_path():
    d = data_dir("two_path")
    net = load_network(d / "node.csv", d / "link.csv")
    return net, load_demand(d / "demand.csv", net)


@pytest.fixture(scope="session")
def sioux_falls():
    d = data_dir("sioux_falls")
    net = load_network(d / "node.csv", d / "link.csv")
    return net, load_demand(d / "demand.csv", net)


def write_network(tmp_path, nodes, links, demand=None):
    """Write GMNS-style CSVs; nodes: [(id,x,y)], links: [(id,i,j,len,speed,lanes,cap)]."""
    (tmp_path / "node.csv").write_text(
        "node_id,x_coord,y_coord\n" + "".join(f"{a},{b},{c}\n" for a, b, c in nodes)
    )
    (tmp_path / "link.csv").write_text(
        "link_id,from_node_id,to_node_id,length,free_speed,lanes,capacity\n"
        + "".join(",".join(str(v) for v in row) + "\n" for row in links)
    )
    if demand is not None:
        (tmp_path / "demand.csv").write_text(
            "o_zone_id,d_zone_id,volume\n" + "".join(f"{o},{d},{v}\n" for o, d, v in demand)
        )
    return tmp_path


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one criterion line: criterion(n, title, checks) with checks [(label, ok, detail)]."""

    def record(n, title, checks):
        ok = all(c[1] for c in checks)
        detail = "; ".join(f"{label}: {detail} [{'ok' if good else 'FAIL'}]" for label, good, detail in checks)
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title} -- {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
