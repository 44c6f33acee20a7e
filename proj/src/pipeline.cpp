#include "giocal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <set>

namespace giocal {

namespace {

struct Key {
  enum Type {
    kPos = 0,
    kVel,
    kAtt,
    kBa,
    kBg,
    kClk,
    kScales,
    kExtP,
    kExtQ,
    kLever,
    kAmb
  };
  int type = 0;
  int a = 0;  // epoch index, or ambiguity id

  bool operator<(const Key& o) const {
    return type != o.type ? type < o.type : a < o.a;
  }
  bool operator==(const Key& o) const { return type == o.type && a == o.a; }
};

struct StandingPrior {
  Key key;
  VecX mean;
  MatX sqrt_info;
  VarKind kind = VarKind::Euclidean;
};

VecX quat_coeffs(const Quat& q) {
  VecX v(4);
  v << q.w(), q.x(), q.y(), q.z();
  return v;
}

MatX iso_sqrt_info(int dim, double sigma) {
  return MatX::Identity(dim, dim) / sigma;
}

class Pipeline {
 public:
  Pipeline(const SimulatedDataset& data, const PipelineConfig& cfg)
      : data_(data), cfg_(cfg) {
    r_nw_ = quat_to_rot(data.q_nw);
    r_en_ = ecef_enu_rotation(data.scenario.origin);
    r_ew_ = r_en_ * r_nw_;
    origin_e_ = geodetic_to_ecef(data.scenario.origin);
    gravity_w_ = r_nw_.transpose() * Vec3(0.0, 0.0, -kGravity);
    lever_value_ = cfg.lever_from_config ? cfg.lever : data.assumed_lever;
    ext_p_ = cfg.init_p_bm;
    ext_q_ = rot_to_quat(rpy_to_rot(cfg.init_rpy_bm_deg.x() * kDegToRad,
                                    cfg.init_rpy_bm_deg.y() * kDegToRad,
                                    cfg.init_rpy_bm_deg.z() * kDegToRad));
    stage1_ = cfg.stage1;
    stage1_.sigma_pr = cfg.sigma_pr0;
    stage1_.sigma_doppler = cfg.sigma_doppler;
  }

  PipelineResult run();

 private:
  struct Node {
    int epoch = 0;
    double t = 0.0;
    Vec3 p = Vec3::Zero(), v = Vec3::Zero(), ba = Vec3::Zero(), bg = Vec3::Zero();
    Quat q = Quat::Identity();
    double clk = 0.0;  // c * tdot_r, m/s
    Vec2 scales = Vec2::Zero();
    bool has_pre = false;
    ImuPreintegrated imu_pre;
    OdoPreintegrated odo_pre;
    std::vector<DdMeasurement> dds;
    std::vector<int> amb_other, amb_ref;  // ambiguity ids per DD
    std::vector<char> use_p, use_l;
    std::vector<GnssRawMeasurement> dopplers;
    MotionType motion = MotionType::None;
    Vec3 gyro_epoch = Vec3::Zero();
  };

  struct AmbRec {
    int sat = 0, band = 0;
    double value = 0.0;
    int last_seen = -10;
    bool alive = false;
    bool creation_prior_pending = false;
  };

  void ingest_epoch(int k);
  void preintegrate_into(Node* node, const Node& prev);
  void predict(Node* node, const Node& prev);
  void process_gnss(Node* node, const Node* prev);
  void marginalize_front();
  void drop_stale_ambiguities();
  void solve_and_extract(PipelineResult* out);
  void attempt_ambiguity_resolution(Problem* problem, const std::map<Key, int>& vars,
                                    PipelineResult* out);
  void reintegrate_if_needed();

  // problem construction
  int ensure_var(Problem* p, std::map<Key, int>* vars, const Key& key);
  void add_pair_factors(Problem* p, std::map<Key, int>* vars, const Node& a,
                        const Node& b);
  void add_node_factors(Problem* p, std::map<Key, int>* vars, const Node& n);
  void add_prior_block_factor(Problem* p, std::map<Key, int>* vars);
  void add_standing_priors(Problem* p, std::map<Key, int>* vars);
  void add_ar_factors(Problem* p, std::map<Key, int>* vars);
  void write_back(const Problem& p, const std::map<Key, int>& vars);

  std::span<const ImuSample> imu_range(double t0, double t1) const;
  std::span<const OdoSample> odo_range(double t0, double t1) const;

  const SimulatedDataset& data_;
  PipelineConfig cfg_;
  Stage1Config stage1_;

  Mat3 r_nw_, r_en_, r_ew_;
  Vec3 origin_e_, gravity_w_, lever_value_;

  std::deque<Node> window_;
  std::vector<AmbRec> ambs_;
  std::map<std::pair<int, int>, int> active_amb_;
  Vec3 ext_p_;
  Quat ext_q_ = Quat::Identity();
  Vec3 lever_est_ = Vec3::Zero();

  PriorBlock prior_;
  std::vector<Key> prior_keys_;
  std::vector<StandingPrior> standing_;
  std::map<std::pair<int, int>, double> fixes_;  // (amb_other, amb_ref) -> n_dd
  PipelineResult* result_ = nullptr;
  double last_pos_var_ = 1.0;
  bool first_node_priors_added_ = false;
};

std::span<const ImuSample> Pipeline::imu_range(double t0, double t1) const {
  const auto& s = data_.imu;
  auto lo = std::lower_bound(s.begin(), s.end(), t0 - 1e-9,
                             [](const ImuSample& a, double t) { return a.t < t; });
  auto hi = std::upper_bound(s.begin(), s.end(), t1 + 1e-9,
                             [](double t, const ImuSample& a) { return t < a.t; });
  return {&*lo, size_t(hi - lo)};
}

std::span<const OdoSample> Pipeline::odo_range(double t0, double t1) const {
  const auto& s = data_.odo;
  auto lo = std::lower_bound(s.begin(), s.end(), t0 - 1e-9,
                             [](const OdoSample& a, double t) { return a.t < t; });
  auto hi = std::upper_bound(s.begin(), s.end(), t1 + 1e-9,
                             [](double t, const OdoSample& a) { return t < a.t; });
  return {&*lo, size_t(hi - lo)};
}

void Pipeline::preintegrate_into(Node* node, const Node& prev) {
  auto imu = imu_range(prev.t, node->t);
  auto odo = odo_range(prev.t, node->t);
  node->imu_pre = imu_preintegrate(imu, prev.ba, prev.bg, cfg_.imu_noise);
  OdometerIntrinsics intr;
  intr.s_v = prev.scales(0);
  intr.s_omega = prev.scales(1);
  intr.rw_s_v = cfg_.s_v_rw;
  intr.rw_s_omega = cfg_.s_omega_rw;
  node->odo_pre = odo_preintegrate(odo, imu, intr, ext_p_, ext_q_, prev.bg, cfg_.odo_noise);
  node->has_pre = true;
}

void Pipeline::predict(Node* node, const Node& prev) {
  const double dt = node->t - prev.t;
  const Mat3 r0 = quat_to_rot(prev.q);
  const Vec3 dp = node->imu_pre.delta_p_corrected(prev.ba, prev.bg);
  const Vec3 dv = node->imu_pre.delta_v_corrected(prev.ba, prev.bg);
  node->p = prev.p + prev.v * dt + 0.5 * gravity_w_ * dt * dt + r0 * dp;
  node->v = prev.v + gravity_w_ * dt + r0 * dv;
  node->q = prev.q * node->imu_pre.delta_q_corrected(prev.bg);
  node->ba = prev.ba;
  node->bg = prev.bg;
  node->clk = prev.clk;
  node->scales = prev.scales;
}

void Pipeline::process_gnss(Node* node, const Node* prev) {
  const int k = node->epoch;
  const auto& rover = data_.rover[k];
  const auto& base = data_.base[k];

  // stage 1: Doppler-consistency screen on consecutive rover epochs
  std::set<std::pair<int, int>> stage1_flagged;
  if (cfg_.outlier_screening && k > 0) {
    std::vector<EpochObservations> pair = {data_.rover[k - 1], rover};
    for (auto& rep : screen_outliers_stage1(pair, stage1_)) {
      stage1_flagged.insert({rep.sat, rep.band});
      if (result_) result_->outliers.push_back(rep);
    }
  }

  node->dds = form_double_differences(rover, base, cfg_.sigma_pr0, cfg_.sigma_cp0);
  node->use_p.assign(node->dds.size(), 1);
  node->use_l.assign(node->dds.size(), 1);
  for (size_t i = 0; i < node->dds.size(); ++i) {
    const auto& dd = node->dds[i];
    if (stage1_flagged.count({dd.sat_other, dd.band}) ||
        stage1_flagged.count({dd.sat_ref, dd.band})) {
      node->use_p[i] = 0;
    }
  }

  // stage 2: whitened DD residual against the preintegrated prediction
  if (cfg_.outlier_screening && prev != nullptr && node->has_pre) {
    const Mat3 r_wb = quat_to_rot(node->q);
    const Vec3 ant_pred = origin_e_ + r_ew_ * (node->p + r_wb * lever_value_);
    const double pred_var =
        last_pos_var_ + node->imu_pre.cov.topLeftCorner<3, 3>().trace() / 3.0;
    std::map<std::pair<int, int>, Vec3> sat_pos;
    for (const auto& m : rover) sat_pos[{m.sat, m.band}] = m.sat_pos;
    Stage2Config s2 = cfg_.stage2;
    auto reports = screen_outliers_stage2(node->dds, sat_pos, ant_pred, pred_var,
                                          data_.base_pos_ecef, s2);
    std::set<std::pair<int, int>> flagged;
    for (auto& rep : reports) {
      flagged.insert({rep.sat, rep.band});
      if (result_) result_->outliers.push_back(rep);
    }
    for (size_t i = 0; i < node->dds.size(); ++i) {
      if (flagged.count({node->dds[i].sat_other, node->dds[i].band})) {
        node->use_p[i] = 0;
        node->use_l[i] = 0;
      }
    }
  }

  // SD ambiguity bookkeeping: one state per (sat, band) track, reset on any
  // gap in the carrier stream (loss-of-lock contract)
  std::map<std::pair<int, int>, const GnssRawMeasurement*> rov_idx, base_idx;
  for (const auto& m : rover) rov_idx[{m.sat, m.band}] = &m;
  for (const auto& m : base) base_idx[{m.sat, m.band}] = &m;
  node->amb_other.resize(node->dds.size());
  node->amb_ref.resize(node->dds.size());

  auto amb_for = [&](int sat, int band) {
    auto it = active_amb_.find({sat, band});
    if (it != active_amb_.end()) {
      AmbRec& rec = ambs_[it->second];
      if (rec.last_seen >= k - 1) {
        rec.last_seen = k;
        return it->second;
      }
      rec.alive = false;  // gap: retire, a fresh state replaces it
    }
    AmbRec rec;
    rec.sat = sat;
    rec.band = band;
    rec.last_seen = k;
    rec.alive = true;
    rec.creation_prior_pending = true;
    const GnssRawMeasurement* r = rov_idx[{sat, band}];
    const GnssRawMeasurement* b = base_idx[{sat, band}];
    if (r && b) {
      rec.value = ((r->carrier_m() - b->carrier_m()) -
                   (r->pseudorange - b->pseudorange)) /
                  r->wavelength;
    }
    ambs_.push_back(rec);
    const int id = int(ambs_.size()) - 1;
    active_amb_[{sat, band}] = id;
    return id;
  };

  for (size_t i = 0; i < node->dds.size(); ++i) {
    node->amb_other[i] = amb_for(node->dds[i].sat_other, node->dds[i].band);
    node->amb_ref[i] = amb_for(node->dds[i].sat_ref, node->dds[i].band);
  }

  node->dopplers = rover;
}

int Pipeline::ensure_var(Problem* p, std::map<Key, int>* vars, const Key& key) {
  auto it = vars->find(key);
  if (it != vars->end()) return it->second;
  int id = -1;
  const Node* node = nullptr;
  for (const auto& n : window_) {
    if (n.epoch == key.a) {
      node = &n;
      break;
    }
  }
  switch (key.type) {
    case Key::kPos: id = p->add_variable(node->p); break;
    case Key::kVel: id = p->add_variable(node->v); break;
    case Key::kAtt: id = p->add_variable(node->q); break;
    case Key::kBa: id = p->add_variable(node->ba); break;
    case Key::kBg: id = p->add_variable(node->bg); break;
    case Key::kClk: id = p->add_variable(node->clk); break;
    case Key::kScales: id = p->add_variable(VarKind::Euclidean, VecX(node->scales)); break;
    case Key::kExtP: id = p->add_variable(ext_p_); break;
    case Key::kExtQ: id = p->add_variable(ext_q_); break;
    case Key::kLever: id = p->add_variable(lever_est_); break;
    case Key::kAmb: id = p->add_variable(ambs_[key.a].value); break;
  }
  (*vars)[key] = id;
  return id;
}

void Pipeline::add_pair_factors(Problem* p, std::map<Key, int>* vars, const Node& a,
                                const Node& b) {
  {
    auto f = std::make_unique<ImuFactor>();
    f->pre = b.imu_pre;
    f->gravity_w = gravity_w_;
    f->sqrt_info = sqrt_info_of_covariance(b.imu_pre.cov);
    f->vars = {ensure_var(p, vars, {Key::kPos, a.epoch}),
               ensure_var(p, vars, {Key::kVel, a.epoch}),
               ensure_var(p, vars, {Key::kAtt, a.epoch}),
               ensure_var(p, vars, {Key::kBa, a.epoch}),
               ensure_var(p, vars, {Key::kBg, a.epoch}),
               ensure_var(p, vars, {Key::kPos, b.epoch}),
               ensure_var(p, vars, {Key::kVel, b.epoch}),
               ensure_var(p, vars, {Key::kAtt, b.epoch}),
               ensure_var(p, vars, {Key::kBa, b.epoch}),
               ensure_var(p, vars, {Key::kBg, b.epoch})};
    p->add_factor(std::move(f));
  }
  {
    auto f = std::make_unique<OdoFactor>();
    f->pre = b.odo_pre;
    f->sqrt_info = sqrt_info_of_covariance(b.odo_pre.cov.topLeftCorner<6, 6>());
    f->vars = {ensure_var(p, vars, {Key::kPos, a.epoch}),
               ensure_var(p, vars, {Key::kAtt, a.epoch}),
               ensure_var(p, vars, {Key::kPos, b.epoch}),
               ensure_var(p, vars, {Key::kAtt, b.epoch}),
               ensure_var(p, vars, {Key::kScales, a.epoch}),
               ensure_var(p, vars, {Key::kExtP, 0}),
               ensure_var(p, vars, {Key::kExtQ, 0})};
    p->add_factor(std::move(f));
  }
  const double dt = std::max(b.t - a.t, 1e-3);
  {
    auto f = std::make_unique<RandomWalkFactor>();
    VecX sig(2);
    sig << std::max(cfg_.s_v_rw, 1e-6) * std::sqrt(dt),
        std::max(cfg_.s_omega_rw, 1e-6) * std::sqrt(dt);
    f->sigma = sig;
    f->vars = {ensure_var(p, vars, {Key::kScales, a.epoch}),
               ensure_var(p, vars, {Key::kScales, b.epoch})};
    p->add_factor(std::move(f));
  }
  {
    auto f = std::make_unique<RandomWalkFactor>();
    VecX sig(1);
    sig << std::max(cfg_.clock_drift_rw, 1e-6) * std::sqrt(dt);
    f->sigma = sig;
    f->vars = {ensure_var(p, vars, {Key::kClk, a.epoch}),
               ensure_var(p, vars, {Key::kClk, b.epoch})};
    p->add_factor(std::move(f));
  }
}

void Pipeline::add_node_factors(Problem* p, std::map<Key, int>* vars, const Node& n) {
  const int pos = ensure_var(p, vars, {Key::kPos, n.epoch});
  const int att = ensure_var(p, vars, {Key::kAtt, n.epoch});
  const int vel = ensure_var(p, vars, {Key::kVel, n.epoch});
  const int bg = ensure_var(p, vars, {Key::kBg, n.epoch});
  const int clk = ensure_var(p, vars, {Key::kClk, n.epoch});
  int lever_var = -1;
  if (cfg_.lever_online) lever_var = ensure_var(p, vars, {Key::kLever, 0});

  // DD range constants on the base side
  auto base_leg = [&](const DdMeasurement& dd,
                      const std::map<std::pair<int, int>, Vec3>& sat_pos) {
    const Vec3 si = sat_pos.at({dd.sat_ref, dd.band});
    const Vec3 sj = sat_pos.at({dd.sat_other, dd.band});
    return (sj - data_.base_pos_ecef).norm() - (si - data_.base_pos_ecef).norm();
  };
  std::map<std::pair<int, int>, Vec3> sat_pos;
  for (const auto& m : data_.rover[n.epoch]) sat_pos[{m.sat, m.band}] = m.sat_pos;

  for (size_t i = 0; i < n.dds.size(); ++i) {
    const auto& dd = n.dds[i];
    const Vec3 si = sat_pos.at({dd.sat_ref, dd.band});
    const Vec3 sj = sat_pos.at({dd.sat_other, dd.band});
    if (n.use_p[i]) {
      auto f = std::make_unique<DdPseudorangeFactor>();
      f->sat_ref = si;
      f->sat_other = sj;
      f->base_leg = base_leg(dd, sat_pos);
      f->measured = dd.p_dd;
      f->sigma = std::sqrt(dd.var_p);
      f->r_ew = r_ew_;
      f->origin_ecef = origin_e_;
      f->lever = lever_value_;
      f->lever_online = cfg_.lever_online;
      f->robust = true;
      f->vars = {pos, att};
      if (cfg_.lever_online) f->vars.push_back(lever_var);
      p->add_factor(std::move(f));
    }
    if (n.use_l[i]) {
      auto f = std::make_unique<DdCarrierFactor>();
      f->sat_ref = si;
      f->sat_other = sj;
      f->base_leg = base_leg(dd, sat_pos);
      f->measured = dd.l_dd;
      f->wavelength = dd.wavelength;
      f->sigma = std::sqrt(dd.var_l);
      f->r_ew = r_ew_;
      f->origin_ecef = origin_e_;
      f->lever = lever_value_;
      f->lever_online = cfg_.lever_online;
      f->robust = true;
      f->vars = {pos, att, ensure_var(p, vars, {Key::kAmb, n.amb_other[i]}),
                 ensure_var(p, vars, {Key::kAmb, n.amb_ref[i]})};
      if (cfg_.lever_online) f->vars.push_back(lever_var);
      p->add_factor(std::move(f));
    }
  }

  for (const auto& m : n.dopplers) {
    auto f = std::make_unique<DopplerFactor>();
    f->sat_pos = m.sat_pos;
    f->sat_vel = m.sat_vel;
    f->sat_clk_drift_ms = m.sat_clk_drift * kSpeedOfLight;
    f->measured = m.doppler * m.wavelength;
    f->sigma = cfg_.sigma_doppler;
    f->r_ew = r_ew_;
    f->origin_ecef = origin_e_;
    f->gyro = n.gyro_epoch;
    f->lever = lever_value_;
    f->lever_online = cfg_.lever_online;
    f->robust = true;
    f->vars = {pos, vel, att, bg, clk};
    if (cfg_.lever_online) f->vars.push_back(lever_var);
    p->add_factor(std::move(f));
  }

  if (cfg_.motion_constraints && n.motion == MotionType::Zupt) {
    auto f = std::make_unique<ZuptFactor>();
    f->sigma = cfg_.zupt_sigma;
    f->vars = {vel};
    p->add_factor(std::move(f));
  } else if (cfg_.motion_constraints && n.motion == MotionType::Nhc) {
    auto f = std::make_unique<NhcFactor>();
    f->sigma = cfg_.nhc_sigma;
    f->vars = {vel, att, ensure_var(p, vars, {Key::kExtQ, 0})};
    p->add_factor(std::move(f));
  }
}

void Pipeline::add_prior_block_factor(Problem* p, std::map<Key, int>* vars) {
  if (prior_.empty()) return;
  auto f = std::make_unique<MarginalPriorFactor>();
  f->block = prior_;
  for (const Key& k : prior_keys_) f->vars.push_back(ensure_var(p, vars, k));
  p->add_factor(std::move(f));
}

void Pipeline::add_standing_priors(Problem* p, std::map<Key, int>* vars) {
  for (const auto& sp : standing_) {
    auto f = std::make_unique<PriorFactor>();
    f->mean = sp.mean;
    f->sqrt_info = sp.sqrt_info;
    f->var_kind = sp.kind;
    f->vars = {ensure_var(p, vars, sp.key)};
    p->add_factor(std::move(f));
  }
}

void Pipeline::add_ar_factors(Problem* p, std::map<Key, int>* vars) {
  for (const auto& [pair, n_dd] : fixes_) {
    if (!ambs_[pair.first].alive || !ambs_[pair.second].alive) continue;
    auto f = std::make_unique<ArFactor>();
    f->fixed_dd = n_dd;
    f->sigma = cfg_.ar_sigma_cycles;
    f->vars = {ensure_var(p, vars, {Key::kAmb, pair.first}),
               ensure_var(p, vars, {Key::kAmb, pair.second})};
    p->add_factor(std::move(f));
  }
}

void Pipeline::write_back(const Problem& p, const std::map<Key, int>& vars) {
  for (const auto& [key, id] : vars) {
    switch (key.type) {
      case Key::kExtP: ext_p_ = p.value(id); break;
      case Key::kExtQ: ext_q_ = p.quat_value(id); break;
      case Key::kLever: lever_est_ = p.value(id); break;
      case Key::kAmb: ambs_[key.a].value = p.value(id)(0); break;
      default: {
        for (auto& n : window_) {
          if (n.epoch != key.a) continue;
          switch (key.type) {
            case Key::kPos: n.p = p.value(id); break;
            case Key::kVel: n.v = p.value(id); break;
            case Key::kAtt: n.q = p.quat_value(id); break;
            case Key::kBa: n.ba = p.value(id); break;
            case Key::kBg: n.bg = p.value(id); break;
            case Key::kClk: n.clk = p.value(id)(0); break;
            case Key::kScales: n.scales = Vec2(p.value(id)); break;
            default: break;
          }
        }
      }
    }
  }
}

void Pipeline::marginalize_front() {
  const Node& front = window_.front();
  const Node& second = window_[1];

  Problem p;
  std::map<Key, int> vars;
  // factors that touch the dropped state: its measurement factors, the pair
  // factors to the next state, consumed standing priors, and the old prior
  std::vector<Key> drop_keys = {{Key::kPos, front.epoch}, {Key::kVel, front.epoch},
                                {Key::kAtt, front.epoch}, {Key::kBa, front.epoch},
                                {Key::kBg, front.epoch},  {Key::kClk, front.epoch},
                                {Key::kScales, front.epoch}};
  std::set<Key> drop_set(drop_keys.begin(), drop_keys.end());

  add_node_factors(&p, &vars, front);
  add_pair_factors(&p, &vars, front, second);

  bool prior_touches = false;
  for (const Key& k : prior_keys_) {
    if (drop_set.count(k)) prior_touches = true;
  }
  if (prior_touches) add_prior_block_factor(&p, &vars);

  // standing priors on dropped keys are consumed here
  std::vector<StandingPrior> kept_standing;
  for (auto& sp : standing_) {
    if (drop_set.count(sp.key)) {
      auto f = std::make_unique<PriorFactor>();
      f->mean = sp.mean;
      f->sqrt_info = sp.sqrt_info;
      f->var_kind = sp.kind;
      f->vars = {ensure_var(&p, &vars, sp.key)};
      p.add_factor(std::move(f));
    } else {
      kept_standing.push_back(sp);
    }
  }
  standing_ = std::move(kept_standing);

  std::vector<const Factor*> factor_ptrs;
  for (const auto& f : p.factors()) factor_ptrs.push_back(f.get());
  std::vector<int> drop_ids;
  for (const Key& k : drop_keys) {
    auto it = vars.find(k);
    if (it != vars.end()) drop_ids.push_back(it->second);
  }

  std::map<int, Key> reverse;
  for (const auto& [key, id] : vars) reverse[id] = key;
  std::vector<int> kept_ids;
  bool repaired = false;
  PriorBlock block = marginalize(p, factor_ptrs, drop_ids, cfg_.solver.huber_delta,
                                 &kept_ids, &repaired);
  if (repaired && result_) {
    result_->warnings.push_back("marginal prior repaired (clamped negative eigenvalue)");
  }
  prior_ = std::move(block);
  prior_keys_.clear();
  for (int id : kept_ids) prior_keys_.push_back(reverse.at(id));

  window_.pop_front();
}

void Pipeline::drop_stale_ambiguities() {
  // ambiguities disappear when no window node references them and they are
  // no longer tracked; their prior information is Schur-eliminated
  std::set<int> referenced;
  for (const auto& n : window_) {
    for (int id : n.amb_other) referenced.insert(id);
    for (int id : n.amb_ref) referenced.insert(id);
  }
  const int newest = window_.empty() ? 0 : window_.back().epoch;
  std::vector<int> to_drop;
  for (int id = 0; id < int(ambs_.size()); ++id) {
    AmbRec& rec = ambs_[id];
    if (!rec.alive && !referenced.count(id)) {
      to_drop.push_back(id);
      continue;
    }
    if (rec.alive && !referenced.count(id) &&
        rec.last_seen < newest - cfg_.amb_drop_after_epochs) {
      rec.alive = false;
      auto it = active_amb_.find({rec.sat, rec.band});
      if (it != active_amb_.end() && it->second == id) active_amb_.erase(it);
      to_drop.push_back(id);
    }
  }
  if (to_drop.empty()) return;

  for (int id : to_drop) {
    // fixes referencing a dropped ambiguity are discarded
    for (auto it = fixes_.begin(); it != fixes_.end();) {
      if (it->first.first == id || it->first.second == id) it = fixes_.erase(it);
      else ++it;
    }
    auto it = active_amb_.find({ambs_[id].sat, ambs_[id].band});
    if (it != active_amb_.end() && it->second == id) active_amb_.erase(it);
    ambs_[id].alive = false;

    const Key key{Key::kAmb, id};
    const bool in_prior =
        std::find(prior_keys_.begin(), prior_keys_.end(), key) != prior_keys_.end();
    std::vector<StandingPrior> kept_standing;
    std::vector<StandingPrior> consumed;
    for (auto& sp : standing_) {
      if (sp.key == key) consumed.push_back(sp);
      else kept_standing.push_back(sp);
    }
    standing_ = std::move(kept_standing);
    if (!in_prior) continue;

    Problem p;
    std::map<Key, int> vars;
    add_prior_block_factor(&p, &vars);
    for (const auto& sp : consumed) {
      auto f = std::make_unique<PriorFactor>();
      f->mean = sp.mean;
      f->sqrt_info = sp.sqrt_info;
      f->var_kind = sp.kind;
      f->vars = {ensure_var(&p, &vars, sp.key)};
      p.add_factor(std::move(f));
    }
    std::vector<const Factor*> factor_ptrs;
    for (const auto& f : p.factors()) factor_ptrs.push_back(f.get());
    std::map<int, Key> reverse;
    for (const auto& [k2, vid] : vars) reverse[vid] = k2;
    std::vector<int> kept_ids;
    PriorBlock block = marginalize(p, factor_ptrs, {vars.at(key)},
                                   cfg_.solver.huber_delta, &kept_ids, nullptr);
    prior_ = std::move(block);
    prior_keys_.clear();
    for (int kid : kept_ids) prior_keys_.push_back(reverse.at(kid));
  }
}

void Pipeline::reintegrate_if_needed() {
  for (size_t i = 1; i < window_.size(); ++i) {
    Node& b = window_[i];
    const Node& a = window_[i - 1];
    if (!b.has_pre) continue;
    const bool bias_moved =
        (a.bg - b.imu_pre.bg_lin).norm() > 2e-3 || (a.ba - b.imu_pre.ba_lin).norm() > 2e-2;
    const bool calib_moved =
        std::abs(a.scales(0) - b.odo_pre.s_v_lin) > 0.01 ||
        std::abs(a.scales(1) - b.odo_pre.s_omega_lin) > 0.01 ||
        (ext_p_ - b.odo_pre.p_bm_lin).norm() > 0.05 ||
        quat_boxminus(ext_q_, b.odo_pre.q_bm_lin).norm() > 0.02 ||
        (a.bg - b.odo_pre.bg_lin).norm() > 2e-3;
    if (bias_moved || calib_moved) preintegrate_into(&b, a);
  }
}

void Pipeline::attempt_ambiguity_resolution(Problem* problem,
                                            const std::map<Key, int>& vars,
                                            PipelineResult* out) {
  const Node& newest = window_.back();
  // reference satellite per band at the newest epoch
  std::map<int, int> ref_amb;  // band -> amb id
  for (size_t i = 0; i < newest.dds.size(); ++i) {
    ref_amb[newest.dds[i].band] = newest.amb_ref[i];
  }
  if (ref_amb.empty()) return;

  // unfixed (other, ref) pairs present at this epoch
  std::vector<int> amb_ids;
  std::vector<int> sd_sats, sd_bands;
  std::set<int> in_set;
  auto push_amb = [&](int id) {
    if (in_set.insert(id).second) {
      amb_ids.push_back(id);
      sd_sats.push_back(ambs_[id].sat);
      sd_bands.push_back(ambs_[id].band);
    }
  };
  bool any_unfixed = false;
  for (size_t i = 0; i < newest.dds.size(); ++i) {
    const int other = newest.amb_other[i];
    const int ref = newest.amb_ref[i];
    if (!fixes_.count({other, ref})) any_unfixed = true;
    push_amb(other);
    push_amb(ref);
  }
  if (!any_unfixed || amb_ids.size() < 2) return;

  std::vector<int> var_ids;
  for (int id : amb_ids) {
    auto it = vars.find({Key::kAmb, id});
    if (it == vars.end()) return;
    var_ids.push_back(it->second);
  }
  VecX a_sd(amb_ids.size());
  for (size_t i = 0; i < amb_ids.size(); ++i) a_sd(i) = ambs_[amb_ids[i]].value;
  const MatX q_sd =
      problem->marginal_covariance(var_ids, cfg_.solver.huber_delta);

  std::map<int, int> ref_sat_per_band;
  for (const auto& [band, amb_id] : ref_amb) ref_sat_per_band[band] = ambs_[amb_id].sat;

  FloatAmbiguitySet dd;
  try {
    dd = sd_to_dd(a_sd, q_sd, sd_sats, sd_bands, ref_sat_per_band);
  } catch (const std::exception&) {
    return;
  }
  // keep only unfixed pairs
  std::vector<int> keep;
  std::map<std::pair<int, int>, int> amb_id_of;
  for (size_t i = 0; i < amb_ids.size(); ++i) {
    amb_id_of[{sd_sats[i], sd_bands[i]}] = amb_ids[i];
  }
  for (int r = 0; r < dd.size(); ++r) {
    const int other = amb_id_of.at({dd.sat_other[r], dd.bands[r]});
    const int ref = amb_id_of.at({dd.sat_ref[r], dd.bands[r]});
    if (!fixes_.count({other, ref})) keep.push_back(r);
  }
  if (keep.empty()) return;
  FloatAmbiguitySet sub;
  sub.values.resize(keep.size());
  sub.cov.resize(keep.size(), keep.size());
  for (size_t i = 0; i < keep.size(); ++i) {
    sub.values(i) = dd.values(keep[i]);
    sub.sat_other.push_back(dd.sat_other[keep[i]]);
    sub.sat_ref.push_back(dd.sat_ref[keep[i]]);
    sub.bands.push_back(dd.bands[keep[i]]);
    for (size_t j = 0; j < keep.size(); ++j) sub.cov(i, j) = dd.cov(keep[i], keep[j]);
  }

  FixResult fix = ils_fix(sub, cfg_.ratio_threshold);
  FixLogEntry log;
  log.t = newest.t;
  log.dim = sub.size();
  log.q1 = fix.q1;
  log.q2 = fix.q2;
  log.ratio = fix.ratio;
  log.accepted = fix.accepted;
  if (fix.accepted) {
    for (int r = 0; r < sub.size(); ++r) {
      const int other = amb_id_of.at({sub.sat_other[r], sub.bands[r]});
      const int ref = amb_id_of.at({sub.sat_ref[r], sub.bands[r]});
      fixes_[{other, ref}] = fix.best(r);
      log.sat_other.push_back(sub.sat_other[r]);
      log.sat_ref.push_back(sub.sat_ref[r]);
      log.bands.push_back(sub.bands[r]);
      log.integers.push_back(std::llround(fix.best(r)));
    }
  }
  out->fixes.push_back(log);
}

void Pipeline::solve_and_extract(PipelineResult* out) {
  Problem p;
  std::map<Key, int> vars;
  add_prior_block_factor(&p, &vars);
  add_standing_priors(&p, &vars);
  for (size_t i = 0; i < window_.size(); ++i) {
    add_node_factors(&p, &vars, window_[i]);
    if (i > 0) add_pair_factors(&p, &vars, window_[i - 1], window_[i]);
  }
  if (cfg_.ambiguity_resolution) add_ar_factors(&p, &vars);

  // keep any otherwise-unreferenced variable weakly anchored
  {
    std::vector<int> refs(p.num_variables(), 0);
    for (const auto& f : p.factors()) {
      for (int v : f->vars) refs[v]++;
    }
    for (const auto& [key, id] : vars) {
      if (refs[id] > 0) continue;
      auto f = std::make_unique<PriorFactor>();
      f->var_kind = p.kind(id);
      f->mean = p.value(id);
      f->sqrt_info = iso_sqrt_info(p.local_dim(id), 1e4);
      f->vars = {id};
      p.add_factor(std::move(f));
    }
  }

  const SolveReport rep = p.solve(cfg_.solver);
  out->final_cost = rep.final_cost;
  if (rep.diverged) {
    out->diverged = true;
    out->warnings.push_back("solver diverged at t=" + std::to_string(window_.back().t));
  }
  write_back(p, vars);

  // calibration covariance
  const Node& newest = window_.back();
  std::vector<int> cov_vars = {vars.at({Key::kExtP, 0}), vars.at({Key::kExtQ, 0}),
                               vars.at({Key::kScales, newest.epoch})};
  if (cfg_.lever_online) cov_vars.push_back(vars.at({Key::kLever, 0}));
  cov_vars.push_back(vars.at({Key::kPos, newest.epoch}));
  const MatX cov = p.marginal_covariance(cov_vars, cfg_.solver.huber_delta);
  last_pos_var_ = cov.bottomRightCorner<3, 3>().trace() / 3.0;

  CalibRecord rec;
  rec.t = newest.t;
  rec.p_bm = ext_p_;
  rec.rpy_bm = rot_to_rpy(quat_to_rot(ext_q_));
  rec.s_v = newest.scales(0);
  rec.s_omega = newest.scales(1);
  rec.lever = cfg_.lever_online ? lever_est_ : lever_value_;
  rec.std(0) = std::sqrt(std::max(cov(0, 0), 0.0));
  rec.std(1) = std::sqrt(std::max(cov(1, 1), 0.0));
  rec.std(2) = std::sqrt(std::max(cov(2, 2), 0.0));
  // attitude error is a right perturbation: x ~ pitch, y ~ roll, z ~ yaw
  rec.std(3) = std::sqrt(std::max(cov(4, 4), 0.0));
  rec.std(4) = std::sqrt(std::max(cov(3, 3), 0.0));
  rec.std(5) = std::sqrt(std::max(cov(5, 5), 0.0));
  rec.std(6) = std::sqrt(std::max(cov(6, 6), 0.0));
  rec.std(7) = std::sqrt(std::max(cov(7, 7), 0.0));
  if (cfg_.lever_online) {
    rec.lever_std = Vec3(std::sqrt(std::max(cov(8, 8), 0.0)),
                         std::sqrt(std::max(cov(9, 9), 0.0)),
                         std::sqrt(std::max(cov(10, 10), 0.0)));
  }
  out->calib.push_back(rec);

  TrajRecord tr;
  tr.t = newest.t;
  tr.p_n = r_nw_ * newest.p;
  tr.v_n = r_nw_ * newest.v;
  tr.q_nb = rot_to_quat(r_nw_ * quat_to_rot(newest.q));
  tr.ba = newest.ba;
  tr.bg = newest.bg;
  tr.clock_drift = newest.clk;
  out->traj.push_back(tr);

  if (cfg_.ambiguity_resolution) attempt_ambiguity_resolution(&p, vars, out);

  reintegrate_if_needed();
}

void Pipeline::ingest_epoch(int k) {
  Node node;
  node.epoch = k;
  node.t = data_.truth.empty() ? double(k) : k / data_.scenario.noise.gnss_hz;

  const Node* prev = window_.empty() ? nullptr : &window_.back();
  if (prev) {
    preintegrate_into(&node, *prev);
    predict(&node, *prev);
  } else {
    node.p = Vec3::Zero();
    node.v = Vec3::Zero();
    node.q = Quat::Identity();
    node.scales = Vec2(cfg_.init_s_v, cfg_.init_s_omega);
  }

  // raw gyro at the epoch, for the Doppler lever term; motion detection uses
  // the bias-corrected trailing window
  {
    auto seg = imu_range(node.t - 0.02, node.t + 0.02);
    if (!seg.empty()) node.gyro_epoch = seg[seg.size() / 2].gyro;
    auto imu_win = imu_range(node.t - cfg_.motion.window, node.t);
    auto odo_win = odo_range(node.t - cfg_.motion.window, node.t);
    std::vector<ImuSample> corrected(imu_win.begin(), imu_win.end());
    const Vec3 bg_est = prev ? prev->bg : Vec3::Zero();
    for (auto& s : corrected) s.gyro -= bg_est;
    node.motion = detect_motion(corrected, odo_win, cfg_.motion);
  }

  process_gnss(&node, prev);

  if (int(window_.size()) >= cfg_.window_size) marginalize_front();
  window_.push_back(std::move(node));
  drop_stale_ambiguities();

  if (!first_node_priors_added_) {
    first_node_priors_added_ = true;
    const Node& n0 = window_.front();
    auto add = [&](Key key, const VecX& mean, const MatX& si, VarKind kind) {
      StandingPrior sp;
      sp.key = key;
      sp.mean = mean;
      sp.sqrt_info = si;
      sp.kind = kind;
      standing_.push_back(sp);
    };
    add({Key::kPos, n0.epoch}, VecX(n0.p), iso_sqrt_info(3, cfg_.prior_pos),
        VarKind::Euclidean);
    add({Key::kVel, n0.epoch}, VecX(n0.v), iso_sqrt_info(3, cfg_.prior_vel),
        VarKind::Euclidean);
    add({Key::kAtt, n0.epoch}, quat_coeffs(n0.q), iso_sqrt_info(3, cfg_.prior_att),
        VarKind::Quaternion);
    add({Key::kBa, n0.epoch}, VecX(n0.ba), iso_sqrt_info(3, cfg_.prior_ba),
        VarKind::Euclidean);
    add({Key::kBg, n0.epoch}, VecX(n0.bg), iso_sqrt_info(3, cfg_.prior_bg),
        VarKind::Euclidean);
    add({Key::kClk, n0.epoch}, VecX::Zero(1),
        iso_sqrt_info(1, cfg_.prior_clock_drift), VarKind::Euclidean);
    add({Key::kScales, n0.epoch}, VecX(n0.scales), iso_sqrt_info(2, cfg_.prior_scale),
        VarKind::Euclidean);
    add({Key::kExtP, 0}, VecX(ext_p_), iso_sqrt_info(3, cfg_.prior_translation),
        VarKind::Euclidean);
    add({Key::kExtQ, 0}, quat_coeffs(ext_q_),
        iso_sqrt_info(3, cfg_.prior_rotation_deg * kDegToRad), VarKind::Quaternion);
    if (cfg_.lever_online) {
      lever_est_ = lever_value_;
      add({Key::kLever, 0}, VecX(lever_est_), iso_sqrt_info(3, cfg_.lever_prior),
          VarKind::Euclidean);
    }
  }

  // creation priors for new ambiguities
  for (int id = 0; id < int(ambs_.size()); ++id) {
    if (!ambs_[id].creation_prior_pending) continue;
    ambs_[id].creation_prior_pending = false;
    StandingPrior sp;
    sp.key = {Key::kAmb, id};
    sp.mean = VecX::Constant(1, ambs_[id].value);
    sp.sqrt_info = iso_sqrt_info(1, cfg_.amb_prior_cycles);
    sp.kind = VarKind::Euclidean;
    standing_.push_back(sp);
  }
}

PipelineResult Pipeline::run() {
  PipelineResult out;
  result_ = &out;
  const int n_epochs = int(data_.rover.size());
  double last_t = -1.0;
  for (int k = 0; k < n_epochs; ++k) {
    const double t = k / data_.scenario.noise.gnss_hz;
    if (last_t >= 0.0 && t - last_t > 2.5 / data_.scenario.noise.gnss_hz) {
      out.warnings.push_back("gnss stream gap before t=" + std::to_string(t));
    }
    last_t = t;
    ingest_epoch(k);
    solve_and_extract(&out);
  }
  out.epochs = n_epochs;
  result_ = nullptr;
  return out;
}

}  // namespace

PipelineResult run_calibration(const SimulatedDataset& data, const PipelineConfig& config) {
  Pipeline pipeline(data, config);
  return pipeline.run();
}

}  // namespace giocal
