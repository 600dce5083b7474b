#include "greenrt/vmprog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "greenrt/error.hpp"

namespace greenrt {

std::string_view opName(Op op) {
  switch (op) {
    case Op::Const: return "CONST";
    case Op::Move: return "MOVE";
    case Op::Add: return "ADD";
    case Op::Sub: return "SUB";
    case Op::Mul: return "MUL";
    case Op::Jmp: return "JMP";
    case Op::Jnz: return "JNZ";
    case Op::Alloc: return "ALLOC";
    case Op::GetField: return "GETFIELD";
    case Op::SetField: return "SETFIELD";
    case Op::GetG: return "GETG";
    case Op::SetG: return "SETG";
    case Op::Call: return "CALL";
    case Op::Ret: return "RET";
    case Op::Spawn: return "SPAWN";
    case Op::Yield: return "YIELD";
    case Op::Safepoint: return "SAFEPOINT";
    case Op::Exit: return "EXIT";
    case Op::Rand: return "RAND";
    case Op::LdConst: return "LDCONST";
  }
  return "?";
}

namespace {

const std::unordered_map<std::string_view, Op>& mnemonics() {
  static const std::unordered_map<std::string_view, Op> table = {
      {"CONST", Op::Const},     {"MOVE", Op::Move},         {"ADD", Op::Add},
      {"SUB", Op::Sub},         {"MUL", Op::Mul},           {"JMP", Op::Jmp},
      {"JNZ", Op::Jnz},         {"ALLOC", Op::Alloc},       {"GETFIELD", Op::GetField},
      {"SETFIELD", Op::SetField}, {"GETG", Op::GetG},       {"SETG", Op::SetG},
      {"CALL", Op::Call},       {"RET", Op::Ret},           {"SPAWN", Op::Spawn},
      {"YIELD", Op::Yield},     {"SAFEPOINT", Op::Safepoint}, {"EXIT", Op::Exit},
      {"RAND", Op::Rand},       {"LDCONST", Op::LdConst},
  };
  return table;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool isIdent(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

struct PendingJump {
  std::size_t fn;
  std::size_t pc;
  std::string label;
  int line;
};

struct PendingCall {
  std::size_t fn;
  std::size_t pc;
  std::string name;
  int line;
};

class Parser {
 public:
  Parser(std::string_view text, const LoadOptions& opts) : text_(text), opts_(opts) {}

  Program run() {
    std::istringstream in{std::string(text_)};
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_;
      auto hash = raw.find('#');
      std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (!body.empty()) parseLine(body);
    }
    resolve();
    check();
    return std::move(prog_);
  }

 private:
  [[noreturn]] void parseError(const std::string& msg) const {
    fail(ErrorKind::Parse, "line " + std::to_string(line_) + ": " + msg);
  }
  [[noreturn]] static void checkError(int line, const std::string& msg) {
    fail(ErrorKind::StaticCheck, "line " + std::to_string(line) + ": " + msg);
  }

  std::int64_t parseInt(const std::string& tok) const {
    std::string s = trim(tok);
    bool neg = false;
    std::size_t i = 0;
    if (!s.empty() && s[0] == '-') {
      neg = true;
      i = 1;
    }
    int base = 10;
    if (s.size() > i + 2 && s[i] == '0' && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
      base = 16;
      i += 2;
    }
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v, base);
    if (s.size() <= i || ec != std::errc() || p != s.data() + s.size()) parseError("expected an integer, got '" + s + "'");
    return neg ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
  }

  std::int32_t parseSlot(const std::string& tok) const {
    std::string s = trim(tok);
    if (s.size() < 2 || s[0] != 's') parseError("expected a slot like s0, got '" + s + "'");
    std::int64_t v = parseInt(s.substr(1));
    if (v < 0 || v >= 64) parseError("slot index out of range: " + s);
    return static_cast<std::int32_t>(v);
  }

  /// Parses `key=value` attributes after a directive.
  std::unordered_map<std::string, std::string> attrs(const std::vector<std::string>& toks, std::size_t from) const {
    std::unordered_map<std::string, std::string> out;
    for (std::size_t i = from; i < toks.size(); ++i) {
      auto eq = toks[i].find('=');
      if (eq == std::string::npos) parseError("expected key=value, got '" + toks[i] + "'");
      out[toks[i].substr(0, eq)] = toks[i].substr(eq + 1);
    }
    return out;
  }

  static std::vector<std::string> words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
  }

  void parseLine(const std::string& body) {
    auto toks = words(body);
    const std::string& head = toks[0];
    if (head == "fn") {
      if (toks.size() < 2 || !isIdent(toks[1])) parseError("fn needs a name");
      auto a = attrs(toks, 2);
      for (auto& [k, v] : a) {
        if (k != "frame" && k != "mask") parseError("unknown fn attribute '" + k + "'");
      }
      if (a.count("frame") == 0) parseError("fn " + toks[1] + " needs frame=K");
      Function f;
      f.name = toks[1];
      f.line = line_;
      std::int64_t frame = parseInt(a["frame"]);
      if (frame < 0 || frame > 64) parseError("frame size must be in 0..64");
      f.frameSize = static_cast<std::uint32_t>(frame);
      if (a.count("mask") != 0) f.frameMask = static_cast<Word>(parseInt(a["mask"]));
      if (prog_.byName.count(f.name) != 0) parseError("duplicate function " + f.name);
      prog_.byName[f.name] = static_cast<int>(prog_.functions.size());
      prog_.functions.push_back(std::move(f));
      cur_ = static_cast<int>(prog_.functions.size()) - 1;
      return;
    }
    if (head == "globals") {
      if (toks.size() < 2) parseError("globals needs a count");
      std::int64_t n = parseInt(toks[1]);
      if (n < 0 || n > 64) parseError("globals count must be in 0..64");
      prog_.globals = static_cast<std::uint32_t>(n);
      auto a = attrs(toks, 2);
      for (auto& [k, v] : a) {
        if (k != "mask") parseError("unknown globals attribute '" + k + "'");
        prog_.globalsMask = static_cast<Word>(parseInt(v));
      }
      if (prog_.globals < 64 && (prog_.globalsMask >> prog_.globals) != 0) parseError("globals mask exceeds count");
      return;
    }
    if (head == "entry") {
      if (toks.size() != 2 || !isIdent(toks[1])) parseError("entry needs a function name");
      entryName_ = toks[1];
      return;
    }
    if (body.back() == ':' && toks.size() == 1) {
      std::string label = body.substr(0, body.size() - 1);
      if (label.size() < 2 || label[0] != 'L' || !isIdent(label)) parseError("labels look like Lname:");
      if (cur_ < 0) parseError("label outside a function");
      auto& table = labels_[static_cast<std::size_t>(cur_)];
      if (table.count(label) != 0) parseError("duplicate label " + label);
      table[label] = prog_.functions[static_cast<std::size_t>(cur_)].code.size();
      return;
    }
    if (cur_ < 0) parseError("instruction outside a function");
    parseInstruction(body);
  }

  void parseInstruction(const std::string& body) {
    auto sp = body.find_first_of(" \t");
    std::string mnem = body.substr(0, sp);
    std::string rest = sp == std::string::npos ? std::string() : trim(body.substr(sp));
    auto it = mnemonics().find(mnem);
    if (it == mnemonics().end()) parseError("unknown instruction '" + mnem + "'");

    std::string arrowDst;
    auto arrow = rest.find("->");
    if (arrow != std::string::npos) {
      arrowDst = trim(rest.substr(arrow + 2));
      rest = trim(rest.substr(0, arrow));
    }
    std::vector<std::string> ops;
    if (!rest.empty()) {
      std::string tok;
      std::istringstream in(rest);
      while (std::getline(in, tok, ',')) ops.push_back(trim(tok));
      for (auto& o : ops) {
        if (o.empty()) parseError("empty operand");
      }
    }

    Instruction ins;
    ins.op = it->second;
    ins.line = line_;
    auto want = [&](std::size_t n) {
      if (ops.size() != n) {
        parseError(mnem + " takes " + std::to_string(n) + " operand(s), got " + std::to_string(ops.size()));
      }
    };
    if (!arrowDst.empty() && ins.op != Op::Call) parseError("'->' is only valid on CALL");

    const std::size_t fnIdx = static_cast<std::size_t>(cur_);
    const std::size_t pc = prog_.functions[fnIdx].code.size();
    switch (ins.op) {
      case Op::Const:
        want(2);
        ins.dst = parseSlot(ops[0]);
        ins.imm = parseInt(ops[1]);
        break;
      case Op::Move:
        want(2);
        ins.dst = parseSlot(ops[0]);
        ins.a = parseSlot(ops[1]);
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
        want(3);
        ins.dst = parseSlot(ops[0]);
        ins.a = parseSlot(ops[1]);
        ins.b = parseSlot(ops[2]);
        break;
      case Op::Jmp:
        want(1);
        jumps_.push_back({fnIdx, pc, ops[0], line_});
        break;
      case Op::Jnz:
        want(2);
        ins.a = parseSlot(ops[0]);
        jumps_.push_back({fnIdx, pc, ops[1], line_});
        break;
      case Op::Alloc:
        want(3);
        ins.dst = parseSlot(ops[0]);
        ins.imm = parseInt(ops[1]);
        ins.mask = static_cast<Word>(parseInt(ops[2]));
        break;
      case Op::GetField:
        want(3);
        ins.dst = parseSlot(ops[0]);
        ins.a = parseSlot(ops[1]);
        ins.imm = parseInt(ops[2]);
        break;
      case Op::SetField:
        want(3);
        ins.a = parseSlot(ops[0]);
        ins.imm = parseInt(ops[1]);
        ins.b = parseSlot(ops[2]);
        break;
      case Op::GetG:
        want(2);
        ins.dst = parseSlot(ops[0]);
        ins.imm = parseInt(ops[1]);
        break;
      case Op::SetG:
        want(2);
        ins.imm = parseInt(ops[0]);
        ins.a = parseSlot(ops[1]);
        break;
      case Op::Call:
        if (ops.empty()) parseError("CALL needs a function name");
        if (!isIdent(ops[0])) parseError("bad function name '" + ops[0] + "'");
        calls_.push_back({fnIdx, pc, ops[0], line_});
        for (std::size_t i = 1; i < ops.size(); ++i) ins.args.push_back(parseSlot(ops[i]));
        if (!arrowDst.empty()) ins.dst = parseSlot(arrowDst);
        break;
      case Op::Spawn:
        if (ops.size() < 2) parseError("SPAWN needs a priority and a function name");
        ins.imm = parseInt(ops[0]);
        if (!isIdent(ops[1])) parseError("bad function name '" + ops[1] + "'");
        calls_.push_back({fnIdx, pc, ops[1], line_});
        for (std::size_t i = 2; i < ops.size(); ++i) ins.args.push_back(parseSlot(ops[i]));
        break;
      case Op::Ret:
      case Op::Exit:
        if (ops.size() > 1) parseError(mnem + " takes at most one operand");
        if (ops.size() == 1) ins.a = parseSlot(ops[0]);
        break;
      case Op::Yield:
      case Op::Safepoint:
        want(0);
        break;
      case Op::Rand:
        want(1);
        ins.dst = parseSlot(ops[0]);
        break;
      case Op::LdConst:
        want(2);
        ins.dst = parseSlot(ops[0]);
        if (!isIdent(ops[1])) parseError("bad constant key '" + ops[1] + "'");
        ins.key = ops[1];
        break;
    }
    prog_.functions[fnIdx].code.push_back(std::move(ins));
  }

  void resolve() {
    for (const auto& j : jumps_) {
      const auto& table = labels_[j.fn];
      auto it = table.find(j.label);
      if (it == table.end()) {
        fail(ErrorKind::Parse, "line " + std::to_string(j.line) + ": undefined label " + j.label);
      }
      prog_.functions[j.fn].code[j.pc].target = static_cast<std::int32_t>(it->second);
    }
    for (const auto& c : calls_) {
      int id = prog_.find(c.name);
      if (id < 0) fail(ErrorKind::Parse, "line " + std::to_string(c.line) + ": undefined function " + c.name);
      prog_.functions[c.fn].code[c.pc].target = id;
    }
    if (prog_.functions.empty()) fail(ErrorKind::Parse, "program has no functions");
    prog_.entry = prog_.find(entryName_);
    if (prog_.entry < 0) fail(ErrorKind::Parse, "entry function '" + entryName_ + "' not defined");
  }

  void check() {
    for (auto& f : prog_.functions) {
      if (f.frameSize < 64 && (f.frameMask >> f.frameSize) != 0) checkError(f.line, "fn " + f.name + " mask exceeds frame");
      if (f.code.empty()) checkError(f.line, "fn " + f.name + " has no instructions");
      for (const auto& ins : f.code) {
        if (ins.target >= 0 && (ins.op == Op::Jmp || ins.op == Op::Jnz) &&
            static_cast<std::size_t>(ins.target) >= f.code.size()) {
          checkError(ins.line, "label points past the end of fn " + f.name);
        }
      }
      Op last = f.code.back().op;
      if (last != Op::Jmp && last != Op::Ret && last != Op::Exit) {
        checkError(f.code.back().line, "fn " + f.name + " can fall off its end");
      }
      f.returns = ReturnKind::None;
      bool sawRet = false;
      for (const auto& ins : f.code) {
        if (ins.op != Op::Ret) continue;
        ReturnKind k = ins.a == kNoSlot ? ReturnKind::None : (f.slotIsRef(ins.a) ? ReturnKind::Ref : ReturnKind::Raw);
        if (sawRet && k != f.returns) checkError(ins.line, "fn " + f.name + " returns inconsistent kinds");
        f.returns = k;
        sawRet = true;
      }
    }
    for (auto& f : prog_.functions) {
      for (const auto& ins : f.code) checkInstruction(f, ins);
    }
    if (prog_.fn(prog_.entry).returns == ReturnKind::Ref) {
      checkError(prog_.fn(prog_.entry).line, "entry function must not return a reference");
    }
    prog_.maxPollFreeRun = 0;
    for (const auto& f : prog_.functions) {
      std::uint64_t k = maxPollFreeRun(f);
      if (k == kUnboundedRun) {
        prog_.hasPollFreeLoops = true;
        if (!opts_.allowPollFreeLoops) {
          checkError(pollFreeLoopLine(f), "loop without a safe point in fn " + f.name +
                                              " (insert SAFEPOINT or pass --allow-pollfree-loops)");
        }
      }
      prog_.maxPollFreeRun = std::max(prog_.maxPollFreeRun, k);
    }
  }

  static int pollFreeLoopLine(const Function& f) {
    for (std::size_t i = 0; i < f.code.size(); ++i) {
      const auto& ins = f.code[i];
      if ((ins.op == Op::Jmp || ins.op == Op::Jnz) && static_cast<std::size_t>(ins.target) <= i) {
        bool polled = false;
        for (std::size_t j = static_cast<std::size_t>(ins.target); j <= i; ++j) polled = polled || isSafePoint(f.code[j].op);
        if (!polled) return ins.line;
      }
    }
    return f.line;
  }

  void checkInstruction(const Function& f, const Instruction& ins) {
    auto slotOk = [&](std::int32_t s) {
      if (s != kNoSlot && static_cast<std::uint32_t>(s) >= f.frameSize) {
        checkError(ins.line, "slot s" + std::to_string(s) + " outside frame of " + std::to_string(f.frameSize));
      }
    };
    slotOk(ins.dst);
    slotOk(ins.a);
    slotOk(ins.b);
    for (auto s : ins.args) slotOk(s);
    auto needRaw = [&](std::int32_t s, const char* what) {
      if (s != kNoSlot && f.slotIsRef(s)) checkError(ins.line, std::string(what) + " must be a raw slot");
    };
    auto needRef = [&](std::int32_t s, const char* what) {
      if (s != kNoSlot && !f.slotIsRef(s)) checkError(ins.line, std::string(what) + " must be a reference slot");
    };
    auto checkArgs = [&](const Function& callee) {
      if (ins.args.size() > callee.frameSize) checkError(ins.line, "too many arguments for " + callee.name);
      for (std::size_t i = 0; i < ins.args.size(); ++i) {
        if (f.slotIsRef(ins.args[i]) != callee.slotIsRef(static_cast<std::int32_t>(i))) {
          checkError(ins.line, "argument " + std::to_string(i) + " kind does not match " + callee.name);
        }
      }
    };
    switch (ins.op) {
      case Op::Const:
      case Op::Rand:
      case Op::LdConst:
        needRaw(ins.dst, "destination");
        break;
      case Op::Move:
        if (f.slotIsRef(ins.dst) != f.slotIsRef(ins.a)) checkError(ins.line, "MOVE between raw and reference slots");
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
        needRaw(ins.dst, "destination");
        needRaw(ins.a, "operand");
        needRaw(ins.b, "operand");
        break;
      case Op::Alloc: {
        needRef(ins.dst, "ALLOC destination");
        if (ins.imm < 1 || ins.imm > UINT32_MAX) checkError(ins.line, "ALLOC size must be at least 1");
        if (ins.imm > kMaxPlainSlots && ins.mask != 0) {
          checkError(ins.line, "objects larger than 64 slots cannot hold references");
        }
        if (ins.imm < 64 && (ins.mask >> ins.imm) != 0) checkError(ins.line, "ALLOC mask exceeds object size");
        break;
      }
      case Op::GetField:
        needRef(ins.a, "object operand");
        if (ins.imm < 0) checkError(ins.line, "negative field index");
        break;
      case Op::SetField:
        needRef(ins.a, "object operand");
        if (ins.imm < 0) checkError(ins.line, "negative field index");
        break;
      case Op::GetG:
      case Op::SetG: {
        if (ins.imm < 0 || ins.imm >= prog_.globals) {
          checkError(ins.line, "global index " + std::to_string(ins.imm) + " not declared");
        }
        std::int32_t s = ins.op == Op::GetG ? ins.dst : ins.a;
        if (f.slotIsRef(s) != prog_.globalIsRef(ins.imm)) checkError(ins.line, "global and slot kinds differ");
        break;
      }
      case Op::Call: {
        const Function& callee = prog_.fn(ins.target);
        checkArgs(callee);
        if (ins.dst != kNoSlot) {
          if (callee.returns == ReturnKind::None) checkError(ins.line, callee.name + " returns no value");
          if ((callee.returns == ReturnKind::Ref) != f.slotIsRef(ins.dst)) {
            checkError(ins.line, "result kind of " + callee.name + " does not match destination");
          }
        }
        break;
      }
      case Op::Spawn: {
        const Function& callee = prog_.fn(ins.target);
        checkArgs(callee);
        if (ins.imm < 0) checkError(ins.line, "negative priority");
        if (callee.returns == ReturnKind::Ref) checkError(ins.line, "thread entry " + callee.name + " returns a reference");
        break;
      }
      case Op::Exit:
        needRaw(ins.a, "exit value");
        break;
      default:
        break;
    }
  }

  std::string_view text_;
  LoadOptions opts_;
  Program prog_;
  int line_ = 0;
  int cur_ = -1;
  std::string entryName_ = "main";
  std::unordered_map<std::size_t, std::unordered_map<std::string, std::size_t>> labels_;
  std::vector<PendingJump> jumps_;
  std::vector<PendingCall> calls_;
};

}  // namespace

std::uint64_t maxPollFreeRun(const Function& f) {
  const std::size_t n = f.code.size();
  // 0 = unvisited, 1 = on stack, 2 = done
  std::vector<int> state(n, 0);
  std::vector<std::uint64_t> longest(n, 0);
  bool cyclic = false;
  std::function<std::uint64_t(std::size_t)> visit = [&](std::size_t i) -> std::uint64_t {
    if (i >= n || isSafePoint(f.code[i].op)) return 0;
    if (state[i] == 2) return longest[i];
    if (state[i] == 1) {
      cyclic = true;
      return 0;
    }
    state[i] = 1;
    const auto& ins = f.code[i];
    std::uint64_t best = 0;
    if (ins.op == Op::Jmp) {
      best = visit(static_cast<std::size_t>(ins.target));
    } else {
      best = visit(i + 1);
      if (ins.op == Op::Jnz) best = std::max(best, visit(static_cast<std::size_t>(ins.target)));
    }
    state[i] = 2;
    longest[i] = best + 1;
    return longest[i];
  };
  std::uint64_t k = 0;
  for (std::size_t i = 0; i < n; ++i) k = std::max(k, visit(i));
  return cyclic ? kUnboundedRun : k;
}

Program loadProgram(std::string_view text, const LoadOptions& opts) { return Parser(text, opts).run(); }

Program loadProgramFile(const std::string& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Program, "cannot open program " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return loadProgram(ss.str(), opts);
}

}  // namespace greenrt
