import pytest

from gloss.exceptions import ConfigError
from gloss.training.config import TrainConfig
from gloss.utils.config_loader import ConfigLoader


class TestTrainConfig:
    def test_defaults_are_valid(self):
        result = TrainConfig().validate()
        assert result['valid'] and not result['errors']

    def test_from_dict_coerces_strings(self):
        config = TrainConfig.from_dict({'lambda': '0.3', 'batch_size': '8', 'shuffle': 'false',
                                        'seeds': '4, 5;6', 'loss': 'scl'})
        assert config.lam == 0.3
        assert config.batch_size == 8
        assert config.shuffle is False
        assert config.seeds == (4, 5, 6)
        assert config.loss == 'scl'

    def test_unknown_key_names_key(self):
        with pytest.raises(ConfigError) as info:
            TrainConfig.from_dict({'gama': '0.5'})
        assert info.value.key == 'gama'

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError) as info:
            TrainConfig.from_dict({'eta': 'rápido'})
        assert info.value.key == 'eta'

    def test_to_dict_uses_file_keys(self):
        data = TrainConfig(lam=0.4).to_dict()
        assert data['lambda'] == 0.4 and 'lam' not in data
        assert TrainConfig.from_dict(data) == TrainConfig(lam=0.4)

    @pytest.mark.parametrize('values, key', [
        ({'gamma': 1.0}, 'gamma'),
        ({'lambda': 1.5}, 'lambda'),
        ({'sigma': -1.0}, 'sigma'),
        ({'eta': 0.0}, 'eta'),
        ({'loss': 'hinge'}, 'loss'),
        ({'batch_size': 3}, 'batch_size'),
        ({'mode': 'standalone', 'loss': 'ce'}, 'loss'),
        ({'max_epochs': 0}, 'max_epochs'),
    ])
    def test_check_rejects_with_key(self, values, key):
        with pytest.raises(ConfigError) as info:
            TrainConfig.from_dict(values).check()
        assert info.value.key == key

    def test_graph_loss_needs_batch_of_four(self):
        assert not TrainConfig(batch_size=3).validate()['valid']
        assert TrainConfig(batch_size=3, loss='ce').validate()['valid']

    def test_standalone_rejects_cross_entropy(self):
        assert not TrainConfig(mode='standalone', loss='ce').validate()['valid']

    def test_recommended_range_warns(self):
        with pytest.warns(UserWarning, match='gamma'):
            TrainConfig(gamma=0.95).check()

    def test_derived_properties(self):
        assert TrainConfig(loss='gloss_sqrt').effective_sigma_mode == 'sqrt'
        assert TrainConfig(lam=0.3).effective_lambda_baseline == 0.3
        assert TrainConfig(lambda_baseline=0.5).effective_lambda_baseline == 0.5
        assert not TrainConfig(lam=0.0).uses_graph
        assert TrainConfig(lam=0.0, mode='standalone').uses_graph
        assert not TrainConfig(loss='triplet').uses_graph


class TestConfigLoader:
    def test_load_file_and_overrides(self, tmp_path):
        (tmp_path / 'exp.cfg').write_text("# comentário\nmode = standalone\nloss = cosine\nlambda = 0.5\n",
                                          encoding='utf-8')
        loader = ConfigLoader(tmp_path)
        assert loader.get_available_configs() == ['exp']
        config = loader.load('exp', {'lambda': '0.2'})
        assert (config.mode, config.loss, config.lam) == ('standalone', 'cosine', 0.2)
        assert loader.load(tmp_path / 'exp.cfg').lam == 0.5

    def test_base_config_is_kept(self, tmp_path):
        loader = ConfigLoader(tmp_path)
        config = loader.load(None, {'gamma': '0.4'}, base=TrainConfig(seed=9))
        assert config.seed == 9 and config.gamma == 0.4

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ConfigLoader(tmp_path).load('nada')

    def test_parse_overrides(self):
        assert ConfigLoader.parse_overrides(['a=1', ' b = x=y ']) == {'a': '1', 'b': 'x=y'}
        with pytest.raises(ConfigError):
            ConfigLoader.parse_overrides(['sem_igual'])

    def test_validate_config(self, tmp_path):
        loader = ConfigLoader(tmp_path)
        assert loader.validate_config({'gamma': '0.5'})['valid']
        result = loader.validate_config({'batch': '8'})
        assert not result['valid'] and 'batch' in result['errors'][0]
        assert not loader.validate_config({'gamma': '2'})['valid']

    def test_template_loads_back(self, tmp_path):
        loader = ConfigLoader(tmp_path)
        original = TrainConfig(mode='standalone', loss='triplet', seeds=(3, 4), shuffle=False)
        loader.create_config_template('modelo', original)
        assert loader.load('modelo') == original

    def test_cache_reload(self, tmp_path):
        path = tmp_path / 'c.cfg'
        path.write_text("gamma = 0.4\n", encoding='utf-8')
        loader = ConfigLoader(tmp_path)
        assert loader.load('c').gamma == 0.4
        path.write_text("gamma = 0.7\n", encoding='utf-8')
        assert loader.load('c').gamma == 0.4
        loader.reload_configs()
        assert loader.load('c').gamma == 0.7

    def test_shipped_configs_are_valid(self):
        loader = ConfigLoader()
        names = loader.get_available_configs()
        assert 'default' in names
        for name in names:
            assert loader.validate_config(loader.load_values(name))['valid'], name

    def test_shipped_median_sigma_uses_gloss_sqrt(self):
        loader = ConfigLoader()
        for name in loader.get_available_configs():
            config = loader.load(name)
            if config.effective_sigma_mode == 'sqrt':
                assert config.loss == 'gloss_sqrt', name
        config = loader.load('blobs_integrated')
        assert (config.mode, config.loss) == ('integrated', 'gloss_sqrt')
