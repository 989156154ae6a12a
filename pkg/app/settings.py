"""Analysis and study configuration files.

Flat INI files: an [analysis] or [study] + [dgp] section, then one
[model:<label>] section per model.
"""
import configparser
import logging

from app.middleware import MODEL_KINDS, ValidationError, handle_validation_errors
from app.models import AnalysisConfig, AssumptionSpec, DgpSpec, GibbsConfig, ModelSpec, StudyConfig

logger = logging.getLogger(__name__)

MODEL_PREFIX = 'model:'
TRUE_WORDS = {'1', 'true', 'yes', 'on'}
FALSE_WORDS = {'0', 'false', 'no', 'off'}


def parse_levels(text):
    try:
        return tuple(float(part) for part in str(text).split(',') if part.strip())
    except ValueError as e:
        raise ValidationError([f"Invalid credible levels '{text}'"]) from e


def _parse_bool(value, name):
    word = str(value).strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValidationError([f"{name} must be true or false, got '{value}'"])


def _load(path):
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding='utf-8') as handle:
            parser.read_file(handle)
    except configparser.Error as e:
        raise ValidationError([f"Malformed config file {path}: {e}"]) from e
    return parser


def model_from_section(label, section):
    """One [model:<label>] section as a ModelSpec"""
    kind = section.get('kind', '').strip()
    if kind not in MODEL_KINDS:
        raise ValidationError([f"Model '{label}': kind must be one of {', '.join(MODEL_KINDS)}"])
    try:
        if kind == 'Heckman':
            return ModelSpec(label, kind, gibbs=GibbsConfig.from_config(section))
        if kind in ('MAR', 'Oracle'):
            return ModelSpec(label, kind)
        return ModelSpec(label, kind, assumption=AssumptionSpec.from_config(section))
    except ValueError as e:
        raise ValidationError([f"Model '{label}': {e}"]) from e


def parse_models(parser):
    models = tuple(
        model_from_section(name[len(MODEL_PREFIX):].strip(), parser[name])
        for name in parser.sections() if name.startswith(MODEL_PREFIX)
    )
    handle_validation_errors([] if models else ["Config defines no [model:<label>] sections"])
    return models


def read_analysis_config(path, defaults):
    """Analysis config; `defaults` supplies draws, seed, levels and output_dir"""
    parser = _load(path)
    section = parser['analysis'] if parser.has_section('analysis') else {}
    models = parse_models(parser)
    if any(m.kind == 'Oracle' for m in models):
        raise ValidationError(["The Oracle model is only available in simulation studies"])
    try:
        qz = section.get('qz')
        return AnalysisConfig(
            input_path=section.get('input', defaults.get('input_path')),
            models=models,
            draws=int(section.get('draws', defaults['draws'])),
            seed=int(section.get('seed', defaults['seed'])),
            levels=parse_levels(section.get('levels', ','.join(map(str, defaults['levels'])))),
            output_dir=section.get('output', defaults['output_dir']),
            qz=float(qz) if qz not in (None, '') else None,
        )
    except ValueError as e:
        raise ValidationError([f"[analysis]: {e}"]) from e


def dgp_from_section(section):
    defaults = DgpSpec()
    try:
        return DgpSpec(
            kind=section.get('kind', defaults.kind).strip(),
            target_missing=float(section.get('target_missing', defaults.target_missing)),
            iv_holds=_parse_bool(section.get('iv_holds', 'true'), 'iv_holds'),
            bias_direction=section.get('bias_direction', defaults.bias_direction).strip(),
            beta0=float(section.get('beta0', defaults.beta0)),
            beta1=float(section.get('beta1', defaults.beta1)),
            beta2=float(section.get('beta2', defaults.beta2)),
            rho=float(section.get('rho', defaults.rho)),
            gamma1=float(section.get('gamma1', defaults.gamma1)),
            gamma2=float(section.get('gamma2', defaults.gamma2)),
            n=int(section.get('n', defaults.n)),
            iv_margin=float(section.get('iv_margin', defaults.iv_margin)),
        )
    except ValueError as e:
        raise ValidationError([f"[dgp]: {e}"]) from e


def read_study_config(path, defaults):
    """Study config; `defaults` supplies draws, seed and level"""
    parser = _load(path)
    handle_validation_errors([] if parser.has_section('dgp') else ["Study config needs a [dgp] section"])
    section = parser['study'] if parser.has_section('study') else {}
    try:
        return StudyConfig(
            dgp=dgp_from_section(parser['dgp']),
            models=parse_models(parser),
            replicates=int(section.get('replicates', 50)),
            seed=int(section.get('seed', defaults['seed'])),
            draws=int(section.get('draws', defaults['draws'])),
            level=float(section.get('level', defaults['level'])),
        )
    except ValueError as e:
        raise ValidationError([f"[study]: {e}"]) from e
