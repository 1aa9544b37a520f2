import pytest

from coordseg_server.config import ServerConfig, load_config


class TestInvariants:
    def test_defaults_are_valid(self):
        cfg = ServerConfig()
        assert cfg.detector_model == "stub"
        assert cfg.port == 8008
        assert cfg.max_side >= 64

    @pytest.mark.parametrize("port", [0, -1, 65536, 100000])
    def test_port_range(self, port):
        with pytest.raises(ValueError):
            ServerConfig(port=port)

    @pytest.mark.parametrize("side", [0, 63, -5])
    def test_max_side_floor(self, side):
        with pytest.raises(ValueError):
            ServerConfig(max_side=side)

    def test_max_side_floor_boundary_ok(self):
        assert ServerConfig(max_side=64).max_side == 64


class TestLoading:
    def test_file_section(self, tmp_path):
        path = tmp_path / "server.ini"
        path.write_text("[server]\nport = 9000\ndevice = cpu\nmax_side = 512\n")
        cfg = load_config(path)
        assert (cfg.port, cfg.device, cfg.max_side) == (9000, "cpu", 512)
        assert cfg.detector_model == "stub"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValueError, match="cannot read"):
            load_config(tmp_path / "nope.ini")

    def test_missing_section(self, tmp_path):
        path = tmp_path / "server.ini"
        path.write_text("[other]\nport = 9000\n")
        with pytest.raises(ValueError, match="server"):
            load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "server.ini"
        path.write_text("[server]\nworkers = 4\n")
        with pytest.raises(ValueError, match="workers"):
            load_config(path)

    def test_non_integer_port_rejected(self, tmp_path):
        path = tmp_path / "server.ini"
        path.write_text("[server]\nport = eighty\n")
        with pytest.raises(ValueError, match="port"):
            load_config(path)

    def test_env_applies(self, monkeypatch):
        monkeypatch.setenv("COORDSEG_SERVER_PORT", "9100")
        monkeypatch.setenv("COORDSEG_SERVER_DETECTOR_MODEL", "stub:hello")
        cfg = load_config()
        assert cfg.port == 9100
        assert cfg.detector_model == "stub:hello"

    def test_precedence_override_beats_file_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("COORDSEG_SERVER_PORT", "9100")
        monkeypatch.setenv("COORDSEG_SERVER_DEVICE", "cuda:1")
        path = tmp_path / "server.ini"
        path.write_text("[server]\nport = 9200\nhost = 0.0.0.0\n")
        cfg = load_config(path, overrides={"port": 9300, "max_side": None})
        assert cfg.port == 9300  # explicit override wins
        assert cfg.host == "0.0.0.0"  # file beats default
        assert cfg.device == "cuda:1"  # env beats default
        assert cfg.max_side == 1536  # None override passes through

    def test_unknown_override_rejected(self):
        with pytest.raises(ValueError, match="threads"):
            load_config(overrides={"threads": 2})

    def test_invalid_resolved_config_still_checked(self, monkeypatch):
        monkeypatch.setenv("COORDSEG_SERVER_MAX_SIDE", "8")
        with pytest.raises(ValueError, match="max_side"):
            load_config()
