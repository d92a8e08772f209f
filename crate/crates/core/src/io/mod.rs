pub mod tensor; pub mod wav;
